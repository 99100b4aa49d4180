//! The model zoo: four score functions over shared embedding tables, the
//! per-user interest boundary head, and hand-derived gradients for all of
//! them.
//!
//! All scorers agree on "higher score = more relevant". The metric scorer
//! returns the *negated* squared distance for exactly this reason: the SML
//! hinge `|s(u,n) − s(u,p) + m|₊` only pulls positives closer than
//! negatives when larger s means better, which keeps one loss convention
//! across every model.

mod checkpoint;
mod grad;
mod graph;
mod mlp;

pub use grad::GradBuffer;
pub use graph::{GraphEncoder, Propagated};
pub use mlp::{Dense, MlpGrads, MlpParams, MlpTrace};

use crate::dataset::InteractionSet;
use crate::error::TrainError;
use crate::losses::LossSpec;
use crate::matrix::{dist_sq, dot, Matrix};
use crate::exec::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Which score function a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Inner product of raw embeddings (matrix factorization).
    Mf,
    /// NCF-style MLP tower over concatenated embeddings.
    Mlp,
    /// Negated squared Euclidean distance (metric learning).
    Metric,
    /// Inner product of graph-propagated embeddings (LightGCN).
    Gcn,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mf" => Ok(ModelKind::Mf),
            "mlp" => Ok(ModelKind::Mlp),
            "metric" => Ok(ModelKind::Metric),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(format!("unknown model kind {other:?} (mf|mlp|metric|gcn)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Mf => "mf",
            ModelKind::Mlp => "mlp",
            ModelKind::Metric => "metric",
            ModelKind::Gcn => "gcn",
        })
    }
}

/// Architecture hyperparameters, separate from learned state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Latent dimension.
    pub d: usize,
    /// Propagation depth; only meaningful for [`ModelKind::Gcn`].
    pub k_layers: usize,
}

/// Learnable per-user margins for the SML losses, kept in `[0, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginParams {
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub max: f64,
}

impl MarginParams {
    pub fn new(user_count: usize, init: f64, max: f64) -> Self {
        MarginParams { m: vec![init; user_count], n: vec![init; user_count], max }
    }

    /// Re-impose the clamp after an optimizer step.
    pub fn clamp_user(&mut self, u: u32) {
        self.m[u as usize] = self.m[u as usize].clamp(0.0, self.max);
        self.n[u as usize] = self.n[u as usize].clamp(0.0, self.max);
    }
}

/// All learnable parameters of one model, plus the derived graph encoder
/// for GCN (rebuilt from the train split, never serialized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub kind: ModelKind,
    pub d: usize,
    pub k_layers: usize,
    pub seed: u64,
    /// User embeddings, `user_count × d`.
    pub p: Matrix,
    /// Item embeddings, `item_count × d`.
    pub q: Matrix,
    /// Boundary head; `b_u = dot(w, P_u)`. Zero-initialized so training
    /// starts from a neutral boundary.
    pub w: Vec<f64>,
    /// Whether the training objective actually moves `w`. Analyses that
    /// need a meaningful boundary check this flag.
    pub boundary_active: bool,
    pub mlp: Option<MlpParams>,
    pub margins: Option<MarginParams>,
    #[serde(skip)]
    pub graph: Option<GraphEncoder>,
}

/// Default margin initialization / clamp for the SML losses.
pub const MARGIN_INIT: f64 = 0.5;
pub const MARGIN_MAX: f64 = 1.0;
/// Embedding init scale.
pub const EMBED_STD: f64 = 0.1;
/// Hidden widths of the NCF tower ([2d, 64, 32, 1] once d is known).
pub const MLP_HIDDEN: [usize; 2] = [64, 32];

impl ModelSpec {
    /// Initialize fresh state. Embeddings are N(0, 0.1²); the MLP uses
    /// fan-in-scaled uniform weights; the boundary head starts at zero.
    /// Sub-seeds are derived per tensor so adding one tensor never shifts
    /// another's draw.
    pub fn init(
        &self,
        loss: LossSpec,
        user_count: usize,
        item_count: usize,
        seed: u64,
    ) -> ModelState {
        let p = Matrix::randn(
            user_count,
            self.d,
            EMBED_STD,
            &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0)),
        );
        let q = Matrix::randn(
            item_count,
            self.d,
            EMBED_STD,
            &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
        );
        let mlp = (self.kind == ModelKind::Mlp).then(|| {
            let widths = [2 * self.d, MLP_HIDDEN[0], MLP_HIDDEN[1], 1];
            MlpParams::new(&widths, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 2)))
        });
        let margins =
            loss.uses_margins().then(|| MarginParams::new(user_count, MARGIN_INIT, MARGIN_MAX));
        ModelState {
            kind: self.kind,
            d: self.d,
            k_layers: if self.kind == ModelKind::Gcn { self.k_layers } else { 0 },
            seed,
            p,
            q,
            w: vec![0.0; self.d],
            boundary_active: loss.uses_boundary(),
            mlp,
            margins,
            graph: None,
        }
    }
}

impl ModelState {
    pub fn user_count(&self) -> usize {
        self.p.rows()
    }

    pub fn item_count(&self) -> usize {
        self.q.rows()
    }

    /// Build (or rebuild) the graph encoder from the train split. Required
    /// before scoring a GCN model; a no-op for the others.
    pub fn ensure_graph(&mut self, train: &InteractionSet) -> Result<(), TrainError> {
        if self.kind == ModelKind::Gcn && self.graph.is_none() {
            self.graph = Some(GraphEncoder::build(train, self.k_layers)?);
        }
        Ok(())
    }

    /// Propagate current embeddings (GCN only; `None` for other kinds).
    pub fn propagate(&self) -> Option<Propagated> {
        match self.kind {
            ModelKind::Gcn => {
                let enc = self.graph.as_ref().expect("graph encoder not built; call ensure_graph");
                Some(enc.propagate(&self.p, &self.q))
            }
            _ => None,
        }
    }

    /// Snapshot view for read-only scoring (evaluation, analyses). For GCN
    /// this pays the propagation cost once up front.
    pub fn frozen(&self) -> FrozenScorer<'_> {
        FrozenScorer { state: self, prop: self.propagate() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite()
            && self.q.is_finite()
            && self.w.iter().all(|v| v.is_finite())
            && self.mlp.as_ref().is_none_or(MlpParams::is_finite)
            && self.margins.as_ref().is_none_or(|m| {
                m.m.iter().all(|v| v.is_finite()) && m.n.iter().all(|v| v.is_finite())
            })
    }
}

/// Inner-product score `dot(P_u, Q_x)`.
pub fn score_mf(state: &ModelState, u: u32, x: u32) -> f64 {
    dot(state.p.row(u as usize), state.q.row(x as usize))
}

/// MLP tower score (raw, pre-sigmoid).
pub fn score_mlp(state: &ModelState, u: u32, x: u32) -> f64 {
    forward(state, None, u, x).0
}

/// Negated squared distance `-‖P_u − Q_x‖²`.
pub fn score_metric(state: &ModelState, u: u32, x: u32) -> f64 {
    -dist_sq(state.p.row(u as usize), state.q.row(x as usize))
}

/// Inner product of propagated embeddings `dot(G(u), G(x))`.
pub fn score_gcn(state: &ModelState, prop: &Propagated, u: u32, x: u32) -> f64 {
    let _ = state;
    dot(prop.user_row(u), prop.item_row(x))
}

/// Item-item metric score `-‖Q_a − Q_b‖²`, used by the SML spread hinge.
pub fn score_item_item(state: &ModelState, a: u32, b: u32) -> f64 {
    debug_assert_eq!(state.kind, ModelKind::Metric, "item-item scores are metric-only");
    -dist_sq(state.q.row(a as usize), state.q.row(b as usize))
}

/// The interest boundary `b_u = dot(W, P_u)`. Always computed from the raw
/// user embedding — for GCN too, where the propagated G(u) would be the
/// other defensible reading.
pub fn boundary(state: &ModelState, u: u32) -> f64 {
    dot(&state.w, state.p.row(u as usize))
}

/// Activation trace kept between forward and backward. Only the MLP needs
/// one; everything else recomputes trivially.
#[derive(Debug, Clone)]
pub enum ScoreTrace {
    None,
    Mlp(MlpTrace),
}

/// Score `(u, x)` under the model, capturing whatever the backward pass
/// will need. GCN callers must pass the propagated snapshot.
pub fn forward(
    state: &ModelState,
    prop: Option<&Propagated>,
    u: u32,
    x: u32,
) -> (f64, ScoreTrace) {
    match state.kind {
        ModelKind::Mf => (score_mf(state, u, x), ScoreTrace::None),
        ModelKind::Metric => (score_metric(state, u, x), ScoreTrace::None),
        ModelKind::Mlp => {
            let mlp = state.mlp.as_ref().expect("mlp params");
            let mut input = Vec::with_capacity(2 * state.d);
            input.extend_from_slice(state.p.row(u as usize));
            input.extend_from_slice(state.q.row(x as usize));
            let (s, trace) = mlp.forward(&input);
            (s, ScoreTrace::Mlp(trace))
        }
        ModelKind::Gcn => {
            let prop = prop.expect("gcn scoring requires a propagated snapshot");
            (score_gcn(state, prop, u, x), ScoreTrace::None)
        }
    }
}

/// Accumulate `upstream · ∂s(u,x)/∂θ` into the buffer, given the forward
/// trace. GCN contributions land in propagated space and get pulled back to
/// the embedding tables by [`GradBuffer::finalize_gcn`] at batch end.
pub fn grad_score_traced(
    state: &ModelState,
    prop: Option<&Propagated>,
    u: u32,
    x: u32,
    trace: &ScoreTrace,
    upstream: f64,
    buf: &mut GradBuffer,
) {
    match state.kind {
        ModelKind::Mf => {
            buf.add_p(u, upstream, state.q.row(x as usize));
            buf.add_q(x, upstream, state.p.row(u as usize));
        }
        ModelKind::Metric => {
            // s = -‖P_u − Q_x‖² ⇒ ∂s/∂P_u = -2(P_u − Q_x)
            let pu = state.p.row(u as usize);
            let qx = state.q.row(x as usize);
            let diff: Vec<f64> = pu.iter().zip(qx).map(|(a, b)| a - b).collect();
            buf.add_p(u, -2.0 * upstream, &diff);
            buf.add_q(x, 2.0 * upstream, &diff);
        }
        ModelKind::Mlp => {
            let mlp = state.mlp.as_ref().expect("mlp params");
            let ScoreTrace::Mlp(trace) = trace else {
                panic!("mlp backward needs the mlp trace");
            };
            let (grads, d_input) = mlp.backward(trace, upstream);
            let dst = buf.dmlp.get_or_insert_with(|| MlpGrads::zeros_like(mlp));
            for (acc, g) in dst.layers.iter_mut().zip(&grads.layers) {
                for (a, v) in acc.w.as_mut_slice().iter_mut().zip(g.w.as_slice()) {
                    *a += v;
                }
                for (a, v) in acc.b.iter_mut().zip(&g.b) {
                    *a += v;
                }
            }
            buf.add_p(u, 1.0, &d_input[..state.d]);
            buf.add_q(x, 1.0, &d_input[state.d..]);
        }
        ModelKind::Gcn => {
            let prop = prop.expect("gcn backward requires the propagated snapshot");
            buf.add_gp(u, upstream, prop.item_row(x));
            buf.add_gq(x, upstream, prop.user_row(u));
        }
    }
}

/// Forward-then-backward convenience for callers that do not keep traces.
pub fn grad_score(
    state: &ModelState,
    prop: Option<&Propagated>,
    u: u32,
    x: u32,
    upstream: f64,
    buf: &mut GradBuffer,
) {
    let (_, trace) = forward(state, prop, u, x);
    grad_score_traced(state, prop, u, x, &trace, upstream, buf);
}

/// Accumulate `upstream · ∂b_u/∂θ`: flows to both W and the raw P_u.
pub fn grad_boundary(state: &ModelState, u: u32, upstream: f64, buf: &mut GradBuffer) {
    buf.add_w(upstream, state.p.row(u as usize));
    buf.add_p(u, upstream, &state.w);
}

/// Accumulate `upstream · ∂s(a,b)/∂θ` for the item-item metric score.
pub fn grad_item_item(state: &ModelState, a: u32, b: u32, upstream: f64, buf: &mut GradBuffer) {
    debug_assert_eq!(state.kind, ModelKind::Metric, "item-item scores are metric-only");
    let qa = state.q.row(a as usize);
    let qb = state.q.row(b as usize);
    let diff: Vec<f64> = qa.iter().zip(qb).map(|(x, y)| x - y).collect();
    buf.add_q(a, -2.0 * upstream, &diff);
    buf.add_q(b, 2.0 * upstream, &diff);
}

/// Read-only scoring view over frozen parameters; cheap to share across
/// threads during evaluation.
pub struct FrozenScorer<'a> {
    pub state: &'a ModelState,
    prop: Option<Propagated>,
}

impl FrozenScorer<'_> {
    pub fn score(&self, u: u32, x: u32) -> f64 {
        forward(self.state, self.prop.as_ref(), u, x).0
    }

    pub fn boundary(&self, u: u32) -> f64 {
        boundary(self.state, u)
    }

    pub fn boundary_active(&self) -> bool {
        self.state.boundary_active
    }
}
