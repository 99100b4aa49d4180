//! Light graph convolution: embeddings are propagated over the symmetric
//! normalized user-item bipartite graph and layer outputs are averaged.
//! No feature transforms, no nonlinearity — exactly the stripped-down
//! LightGCN encoder.

use crate::dataset::{InteractionSet, Role};
use crate::error::TrainError;
use crate::matrix::Matrix;

/// Normalized bipartite adjacency in CSR form over the stacked node space
/// (users `0..U`, items `U..U+I`), plus the propagation depth K.
///
/// Entry (u, i) carries `1 / sqrt(deg(u) · deg(i))`; the matrix is
/// symmetric, which is what lets the backward pass reuse the same
/// propagation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoder {
    pub k_layers: usize,
    user_count: usize,
    item_count: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

/// Layer-averaged propagated embeddings for a frozen parameter snapshot:
/// `G = (E⁰ + ÂE⁰ + ... + Â^K E⁰) / (K+1)`.
#[derive(Debug, Clone)]
pub struct Propagated {
    stacked: Matrix,
    user_count: usize,
}

impl Propagated {
    pub fn user_row(&self, u: u32) -> &[f64] {
        self.stacked.row(u as usize)
    }

    pub fn item_row(&self, x: u32) -> &[f64] {
        self.stacked.row(self.user_count + x as usize)
    }
}

impl GraphEncoder {
    /// Build from the train split only — evaluation edges leaking into the
    /// graph would let the encoder see the answers.
    pub fn build(train: &InteractionSet, k_layers: usize) -> Result<Self, TrainError> {
        if train.role() != Role::Train {
            return Err(TrainError::BadConfig(format!(
                "graph encoder must be built from the train split, got {:?} data",
                train.role()
            )));
        }
        let (uc, ic) = (train.user_count(), train.item_count());
        let n = uc + ic;
        let mut deg = vec![0usize; n];
        for (u, i) in train.pairs() {
            deg[u as usize] += 1;
            deg[uc + i as usize] += 1;
        }
        // symmetric edges: one row pass for users, one for items
        let mut row_ptr = vec![0usize; n + 1];
        for v in 0..n {
            row_ptr[v + 1] = row_ptr[v] + deg[v];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0u32; nnz];
        let mut vals = vec![0.0f64; nnz];
        let mut cursor = row_ptr.clone();
        for (u, i) in train.pairs() {
            let (a, b) = (u as usize, uc + i as usize);
            let w = 1.0 / ((deg[a] * deg[b]) as f64).sqrt();
            col_idx[cursor[a]] = b as u32;
            vals[cursor[a]] = w;
            cursor[a] += 1;
            col_idx[cursor[b]] = a as u32;
            vals[cursor[b]] = w;
            cursor[b] += 1;
        }
        Ok(GraphEncoder { k_layers, user_count: uc, item_count: ic, row_ptr, col_idx, vals })
    }

    pub fn node_count(&self) -> usize {
        self.user_count + self.item_count
    }

    /// `Y = Â X` for a dense stacked matrix X.
    fn spmm(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut y = Matrix::zeros(x.rows(), d);
        for v in 0..self.node_count() {
            let out = y.row_mut(v);
            for e in self.row_ptr[v]..self.row_ptr[v + 1] {
                let src = x.row(self.col_idx[e] as usize);
                let w = self.vals[e];
                for (o, &s) in out.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        y
    }

    /// `(Σ_{k=0..K} Â^k X) / (K+1)` — the layer combination applied to any
    /// stacked matrix. Forward propagation applies it to the embeddings;
    /// because Â is symmetric, the backward pass applies the very same map
    /// to the upstream gradient.
    pub fn layer_combine(&self, x: Matrix) -> Matrix {
        let mut acc = x.clone();
        let mut cur = x;
        for _ in 0..self.k_layers {
            cur = self.spmm(&cur);
            for (a, c) in acc.as_mut_slice().iter_mut().zip(cur.as_slice()) {
                *a += c;
            }
        }
        let scale = 1.0 / (self.k_layers as f64 + 1.0);
        for a in acc.as_mut_slice().iter_mut() {
            *a *= scale;
        }
        acc
    }

    /// Propagate a parameter snapshot into scoring embeddings.
    pub fn propagate(&self, p: &Matrix, q: &Matrix) -> Propagated {
        assert_eq!(p.rows(), self.user_count);
        assert_eq!(q.rows(), self.item_count);
        let d = p.cols();
        let mut stacked = Matrix::zeros(self.node_count(), d);
        stacked.as_mut_slice()[..p.rows() * d].copy_from_slice(p.as_slice());
        stacked.as_mut_slice()[p.rows() * d..].copy_from_slice(q.as_slice());
        Propagated { stacked: self.layer_combine(stacked), user_count: self.user_count }
    }

    /// Pull a gradient w.r.t. the propagated embeddings back to the raw
    /// embedding tables, returning stacked `∂L/∂E⁰`.
    pub fn pullback(&self, d_stacked: Matrix) -> Matrix {
        self.layer_combine(d_stacked)
    }

    pub fn split_stacked<'a>(&self, stacked: &'a Matrix) -> (&'a [f64], &'a [f64]) {
        let cut = self.user_count * stacked.cols();
        stacked.as_slice().split_at(cut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph() -> (InteractionSet, GraphEncoder) {
        // u0 - i0 - u1 - i1 (as bipartite edges: (0,0), (1,0), (1,1))
        let train =
            InteractionSet::from_pairs(Role::Train, 2, 2, vec![(0, 0), (1, 0), (1, 1)]);
        let enc = GraphEncoder::build(&train, 1).unwrap();
        (train, enc)
    }

    #[test]
    fn rejects_non_train_splits() {
        let valid = InteractionSet::from_pairs(Role::Valid, 1, 1, vec![(0, 0)]);
        assert!(GraphEncoder::build(&valid, 2).is_err());
    }

    #[test]
    fn single_edge_one_step_propagation_by_hand() {
        // one user, one item, d=1, embeddings (a), (b): deg both 1 so
        // Â = [[0,1],[1,0]]; with K=1 the combined embedding is
        // ((a+b)/2, (a+b)/2)
        let train = InteractionSet::from_pairs(Role::Train, 1, 1, vec![(0, 0)]);
        let enc = GraphEncoder::build(&train, 1).unwrap();
        let p = Matrix::from_vec(1, 1, vec![3.0]);
        let q = Matrix::from_vec(1, 1, vec![5.0]);
        let g = enc.propagate(&p, &q);
        assert_eq!(g.user_row(0), &[4.0]);
        assert_eq!(g.item_row(0), &[4.0]);
    }

    #[test]
    fn normalization_uses_both_degrees() {
        let (_, enc) = line_graph();
        // edge (u0, i0): deg(u0)=1, deg(i0)=2 → weight 1/√2
        let dense = enc.dense();
        let uc = 2;
        assert!((dense[0][uc] - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
        // edge (u1, i1): deg(u1)=2, deg(i1)=1 → 1/√2
        assert!((dense[1][uc + 1] - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
        // edge (u1, i0): both degree 2 → 1/2
        assert!((dense[1][uc] - 0.5).abs() < 1e-15);
        // symmetry
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(dense[a][b], dense[b][a]);
            }
        }
    }

    #[test]
    fn sparse_propagation_matches_dense_oracle() {
        // random small graph: 5 users, 5 items, K=2
        let mut pairs = Vec::new();
        for u in 0..5u32 {
            for i in 0..5u32 {
                if (u * 7 + i * 3) % 4 == 0 {
                    pairs.push((u, i));
                }
            }
        }
        let train = InteractionSet::from_pairs(Role::Train, 5, 5, pairs);
        let enc = GraphEncoder::build(&train, 2).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let p = Matrix::randn(5, 3, 1.0, &mut rng);
        let q = Matrix::randn(5, 3, 1.0, &mut rng);
        let got = enc.propagate(&p, &q);

        // dense oracle: explicit matrix powers
        let a = enc.dense();
        let n = 10;
        let mut e0 = vec![vec![0.0; 3]; n];
        for u in 0..5 {
            e0[u] = p.row(u).to_vec();
            e0[5 + u] = q.row(u).to_vec();
        }
        let matvec = |m: &Vec<Vec<f64>>, x: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let mut y = vec![vec![0.0; 3]; n];
            for r in 0..n {
                for c in 0..n {
                    for k in 0..3 {
                        y[r][k] += m[r][c] * x[c][k];
                    }
                }
            }
            y
        };
        let e1 = matvec(&a, &e0);
        let e2 = matvec(&a, &e1);
        for v in 0..n {
            for k in 0..3 {
                let want = (e0[v][k] + e1[v][k] + e2[v][k]) / 3.0;
                let got_row =
                    if v < 5 { got.user_row(v as u32) } else { got.item_row((v - 5) as u32) };
                assert!((got_row[k] - want).abs() < 1e-10, "node {v} dim {k}");
            }
        }
    }

    impl GraphEncoder {
        /// Dense copy of Â for test oracles.
        fn dense(&self) -> Vec<Vec<f64>> {
            let n = self.node_count();
            let mut m = vec![vec![0.0; n]; n];
            for v in 0..n {
                for e in self.row_ptr[v]..self.row_ptr[v + 1] {
                    m[v][self.col_idx[e] as usize] = self.vals[e];
                }
            }
            m
        }
    }
}
