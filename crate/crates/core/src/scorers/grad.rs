//! Sparse gradient accumulation. A buffer collects contributions from every
//! sample in a batch keyed by the parameter rows actually touched, so the
//! optimizer can do sparse Adagrad updates without scanning full tables.

use super::graph::GraphEncoder;
use super::mlp::MlpGrads;
use crate::matrix::{axpy, Matrix};
use std::collections::HashMap;

/// Accumulated gradients for one batch. Embedding gradients are keyed by
/// row; MLP and boundary-head gradients are dense but allocated only when
/// first touched. Graph models first accumulate in propagated space
/// (`dgp`/`dgq`) and move to `dp`/`dq` in [`finalize_gcn`](Self::finalize_gcn).
#[derive(Debug, Clone, Default)]
pub struct GradBuffer {
    d: usize,
    pub dp: HashMap<u32, Vec<f64>>,
    pub dq: HashMap<u32, Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub dmlp: Option<MlpGrads>,
    pub dm: HashMap<u32, f64>,
    pub dn: HashMap<u32, f64>,
    pub dgp: HashMap<u32, Vec<f64>>,
    pub dgq: HashMap<u32, Vec<f64>>,
}

impl GradBuffer {
    pub fn new(d: usize) -> Self {
        GradBuffer { d, ..GradBuffer::default() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn add_row(map: &mut HashMap<u32, Vec<f64>>, d: usize, key: u32, scale: f64, vec: &[f64]) {
        let row = map.entry(key).or_insert_with(|| vec![0.0; d]);
        axpy(scale, vec, row);
    }

    pub fn add_p(&mut self, u: u32, scale: f64, vec: &[f64]) {
        Self::add_row(&mut self.dp, self.d, u, scale, vec);
    }

    pub fn add_q(&mut self, x: u32, scale: f64, vec: &[f64]) {
        Self::add_row(&mut self.dq, self.d, x, scale, vec);
    }

    pub fn add_gp(&mut self, u: u32, scale: f64, vec: &[f64]) {
        Self::add_row(&mut self.dgp, self.d, u, scale, vec);
    }

    pub fn add_gq(&mut self, x: u32, scale: f64, vec: &[f64]) {
        Self::add_row(&mut self.dgq, self.d, x, scale, vec);
    }

    pub fn add_w(&mut self, scale: f64, vec: &[f64]) {
        let w = self.dw.get_or_insert_with(|| vec![0.0; self.d]);
        axpy(scale, vec, w);
    }

    pub fn add_m(&mut self, u: u32, g: f64) {
        *self.dm.entry(u).or_insert(0.0) += g;
    }

    pub fn add_n(&mut self, u: u32, g: f64) {
        *self.dn.entry(u).or_insert(0.0) += g;
    }

    /// Convert propagated-space gradients into raw-embedding gradients by
    /// pushing them back through the (symmetric) propagation operator, then
    /// fold every row that received anything into `dp`/`dq`. Call once per
    /// batch, after all samples are accumulated.
    pub fn finalize_gcn(&mut self, enc: &GraphEncoder, user_count: usize) {
        if self.dgp.is_empty() && self.dgq.is_empty() {
            return;
        }
        let mut stacked = Matrix::zeros(enc.node_count(), self.d);
        for (&u, g) in &self.dgp {
            stacked.row_mut(u as usize).copy_from_slice(g);
        }
        for (&x, g) in &self.dgq {
            stacked.row_mut(user_count + x as usize).copy_from_slice(g);
        }
        let pulled = enc.pullback(stacked);
        for v in 0..enc.node_count() {
            let row = pulled.row(v);
            if row.iter().all(|&g| g == 0.0) {
                continue;
            }
            if v < user_count {
                self.add_p(v as u32, 1.0, row);
            } else {
                self.add_q((v - user_count) as u32, 1.0, row);
            }
        }
        self.dgp.clear();
        self.dgq.clear();
    }

    pub fn is_finite(&self) -> bool {
        let rows_ok = |m: &HashMap<u32, Vec<f64>>| {
            m.values().all(|v| v.iter().all(|g| g.is_finite()))
        };
        rows_ok(&self.dp)
            && rows_ok(&self.dq)
            && rows_ok(&self.dgp)
            && rows_ok(&self.dgq)
            && self.dw.as_ref().is_none_or(|w| w.iter().all(|g| g.is_finite()))
            && self.dmlp.as_ref().is_none_or(|m| {
                m.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|g| g.is_finite()))
            })
            && self.dm.values().all(|g| g.is_finite())
            && self.dn.values().all(|g| g.is_finite())
    }

    pub fn clear(&mut self) {
        self.dp.clear();
        self.dq.clear();
        self.dw = None;
        self.dmlp = None;
        self.dm.clear();
        self.dn.clear();
        self.dgp.clear();
        self.dgq.clear();
    }
}
