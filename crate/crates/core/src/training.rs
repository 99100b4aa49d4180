//! The optimization loop: sparse Adagrad over batch gradients, early
//! stopping on validation NDCG@10, per-epoch corrupted-rate tracing, grid
//! search, and multi-seed repetition.

use std::collections::HashMap;
use std::sync::mpsc;

use crate::dataset::{
    build_candidates, sample_batch, split_leave_one_out, EvalCandidates, HoldoutRole,
    InteractionSet, SplitSummary, TrainBatch,
};
use crate::error::{DataError, EvalError, TrainError};
use crate::evaluation::evaluate;
use crate::exec::{derive_seed, map_slice, ExecMode};
use crate::losses::{
    corrupted_counts, pairwise_bpr_loss, pointwise_ce_loss, sml_loss, sml_uib_loss, uib_loss,
    CorruptedCounts, LossSpec, LossValue, Phi,
};
use crate::matrix::Matrix;
use crate::scorers::{
    boundary, forward, grad_boundary, grad_item_item, grad_score_traced, score_item_item,
    GradBuffer, MlpGrads, ModelKind, ModelSpec, ModelState, Propagated,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Adagrad denominator stabilizer. Far below any gradient scale that occurs
/// here, so it only matters for the very first step of an untouched row.
pub const ADAGRAD_EPS: f64 = 1e-10;

/// Sub-seed stream for the batch sampler, kept away from the model-init
/// streams so each component is reproducible in isolation.
const SAMPLER_STREAM: u64 = 0x5341_4d50;

/// Everything a run needs: the three splits plus frozen candidates.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
    pub candidates: EvalCandidates,
}

impl DataBundle {
    /// Whether validation candidates exist. Without them the loop cannot
    /// early-stop and simply runs the full epoch budget, keeping the final
    /// state (useful for toy datasets too small to split).
    pub fn has_validation(&self) -> bool {
        !self.candidates.entries(HoldoutRole::Valid).is_empty()
    }

    /// Standard protocol in one call: leave-one-out split of `all`, then
    /// frozen candidate sets with `n_neg` negatives per holdout. The same
    /// seed drives both, so a bundle is a pure function of (data, seed).
    pub fn prepare(
        all: &InteractionSet,
        seed: u64,
        n_neg: usize,
    ) -> Result<(Self, SplitSummary), DataError> {
        let split = split_leave_one_out(all, seed);
        let candidates =
            build_candidates(&split.train, &split.valid, &split.test, n_neg, seed)?;
        Ok((
            DataBundle {
                train: split.train,
                valid: split.valid,
                test: split.test,
                candidates,
            },
            split.summary,
        ))
    }
}

/// One training run, fully resolved. `exec` is deliberately excluded from
/// serialized manifests: both modes produce bit-identical results, so it is
/// not part of a run's identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub loss: LossSpec,
    pub batch_size: usize,
    /// Negatives drawn per positive. Defaults to 32 for the boundary
    /// losses (the M that drives class balancing) and 1 for baselines.
    pub m_neg: usize,
    pub max_epochs: usize,
    /// Adagrad learning rate η.
    pub eta: f64,
    /// L2 coefficient on embedding rows touched by a batch.
    pub tau: f64,
    /// Extra weight decay (LightGCN runs), added onto τ for embeddings.
    pub upsilon: f64,
    pub seed: u64,
    /// Early-stop patience, counted in validation evaluations (one per
    /// epoch) without an NDCG@10 improvement.
    pub patience: usize,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl TrainConfig {
    pub fn new(model: ModelSpec, loss: LossSpec) -> Self {
        TrainConfig {
            model,
            loss,
            batch_size: 1024,
            m_neg: if loss.alpha().is_some() { 32 } else { 1 },
            max_epochs: 500,
            eta: 0.1,
            tau: 0.0,
            upsilon: 0.0,
            seed: 0,
            patience: 20,
            exec: ExecMode::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::BadConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.m_neg == 0 {
            return bad("m_neg must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive and finite, got {}", self.eta));
        }
        for (name, v) in [("tau", self.tau), ("upsilon", self.upsilon)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        if self.model.d == 0 {
            return bad("embedding dimension d must be at least 1".into());
        }
        self.loss.validate().map_err(TrainError::BadConfig)?;
        let metric_loss = self.loss.uses_margins();
        let metric_kind = self.model.kind == ModelKind::Metric;
        if metric_loss != metric_kind {
            return bad(format!(
                "loss {} and model kind {} do not go together: the SML losses \
                 need the metric scorer's item-item distances and margins, and \
                 the metric scorer has no other objective",
                self.loss.name(),
                self.model.kind
            ));
        }
        Ok(())
    }
}

/// One line of the training history (the JSONL log schema). The three loss
/// columns are per-instance means, where an instance is one positive with
/// its `m_neg` negatives; `loss_pos`/`loss_neg` stay zero for objectives
/// without a per-side decomposition (plain pairwise and SML). The `val_*`
/// columns are `None` on bundles without validation candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_pos: f64,
    pub loss_neg: f64,
    pub corrupted_rate: f64,
    pub val_hit1: Option<f64>,
    pub val_hit10: Option<f64>,
    pub val_ndcg10: Option<f64>,
    pub val_mrr10: Option<f64>,
}

/// Result of [`train`]: the best-validation checkpoint and the full trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
    /// Index into `history` of the returned checkpoint.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Set when a later epoch went non-finite and the best earlier
    /// checkpoint was returned instead.
    pub diverged_at: Option<usize>,
    pub batches_per_epoch: usize,
}

/// Per-parameter accumulated squared gradients.
#[derive(Debug, Clone)]
pub struct AdagradState {
    pub eps: f64,
    acc_p: Matrix,
    acc_q: Matrix,
    acc_w: Vec<f64>,
    acc_mlp: Option<MlpGrads>,
    acc_m: Vec<f64>,
    acc_n: Vec<f64>,
}

impl AdagradState {
    pub fn new(state: &ModelState) -> Self {
        let margin_len = state.margins.as_ref().map_or(0, |m| m.m.len());
        AdagradState {
            eps: ADAGRAD_EPS,
            acc_p: Matrix::zeros(state.user_count(), state.d),
            acc_q: Matrix::zeros(state.item_count(), state.d),
            acc_w: vec![0.0; state.d],
            acc_mlp: state.mlp.as_ref().map(MlpGrads::zeros_like),
            acc_m: vec![0.0; margin_len],
            acc_n: vec![0.0; margin_len],
        }
    }
}

fn adagrad_row(theta: &mut [f64], acc: &mut [f64], grad: &[f64], eta: f64, l2: f64, eps: f64) {
    for ((t, a), &g) in theta.iter_mut().zip(acc).zip(grad) {
        let g_eff = g + l2 * *t;
        *a += g_eff * g_eff;
        *t -= eta * g_eff / (a.sqrt() + eps);
    }
}

/// Apply one sparse Adagrad update: `acc += g²; θ -= η·g/(√acc + ε)`, with
/// the L2 term `l2·θ` folded into `g` before accumulation.
///
/// Only parameters present in the buffer move, and the L2 term applies to
/// embedding rows only — the boundary head, MLP stack, and margins follow
/// their raw gradients. Margins are re-clamped after their step.
pub fn adagrad_step(
    state: &mut ModelState,
    opt: &mut AdagradState,
    buf: &GradBuffer,
    eta: f64,
    l2: f64,
) {
    let eps = opt.eps;
    for (&u, g) in &buf.dp {
        adagrad_row(state.p.row_mut(u as usize), opt.acc_p.row_mut(u as usize), g, eta, l2, eps);
    }
    for (&x, g) in &buf.dq {
        adagrad_row(state.q.row_mut(x as usize), opt.acc_q.row_mut(x as usize), g, eta, l2, eps);
    }
    if let Some(dw) = &buf.dw {
        adagrad_row(&mut state.w, &mut opt.acc_w, dw, eta, 0.0, eps);
    }
    if let (Some(mlp), Some(dmlp), Some(acc)) = (&mut state.mlp, &buf.dmlp, &mut opt.acc_mlp) {
        for ((layer, gl), al) in mlp.layers.iter_mut().zip(&dmlp.layers).zip(&mut acc.layers) {
            adagrad_row(layer.w.as_mut_slice(), al.w.as_mut_slice(), gl.w.as_slice(), eta, 0.0, eps);
            adagrad_row(&mut layer.b, &mut al.b, &gl.b, eta, 0.0, eps);
        }
    }
    if let Some(margins) = &mut state.margins {
        for (&u, &g) in &buf.dm {
            let a = &mut opt.acc_m[u as usize];
            *a += g * g;
            margins.m[u as usize] -= eta * g / (a.sqrt() + eps);
        }
        for (&u, &g) in &buf.dn {
            let a = &mut opt.acc_n[u as usize];
            *a += g * g;
            margins.n[u as usize] -= eta * g / (a.sqrt() + eps);
        }
        for &u in buf.dm.keys().chain(buf.dn.keys()) {
            margins.clamp_user(u);
        }
    }
}

/// Name the first gradient tensor holding a non-finite value, for the
/// abort diagnostic.
fn bad_tensor(buf: &GradBuffer) -> Option<&'static str> {
    let rows_bad =
        |m: &HashMap<u32, Vec<f64>>| m.values().any(|v| v.iter().any(|g| !g.is_finite()));
    if rows_bad(&buf.dp) || rows_bad(&buf.dgp) {
        return Some("P");
    }
    if rows_bad(&buf.dq) || rows_bad(&buf.dgq) {
        return Some("Q");
    }
    if buf.dw.as_ref().is_some_and(|w| w.iter().any(|g| !g.is_finite())) {
        return Some("W");
    }
    if buf.dmlp.as_ref().is_some_and(|m| {
        m.layers.iter().any(|l| !l.w.is_finite() || l.b.iter().any(|g| !g.is_finite()))
    }) {
        return Some("MLP");
    }
    if buf.dm.values().chain(buf.dn.values()).any(|g| !g.is_finite()) {
        return Some("margins");
    }
    None
}

/// The reference each sample is compared against when counting corrupted
/// samples: the learned boundary for the boundary losses, the hard zero
/// line for pointwise CE (σ(0) = ½ is its decision threshold), nothing for
/// the purely pairwise objectives.
fn boundary_reference(state: &ModelState, loss: LossSpec, u: u32) -> Option<f64> {
    match loss {
        LossSpec::UibLnsig { .. } | LossSpec::SmlUib { .. } => Some(boundary(state, u)),
        LossSpec::PointwiseCe => Some(0.0),
        LossSpec::PairwiseLnsig | LossSpec::Sml { .. } => None,
    }
}

fn rate_from(loss: LossSpec, c: &CorruptedCounts) -> f64 {
    let (bad, total) = if loss.uses_boundary() || loss == LossSpec::PointwiseCe {
        (c.side_bad, c.side_total)
    } else {
        (c.pair_bad, c.pair_total)
    };
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Fraction of a batch's comparisons that still violate the objective's
/// ordering — `s_n ≥ s_p` pairs for pairwise losses, samples on the wrong
/// side of the boundary for the boundary losses (hard zero line for
/// pointwise CE). Shares its counting with `effective_pair_stats`.
pub fn corrupted_rate(
    state: &ModelState,
    prop: Option<&Propagated>,
    loss: LossSpec,
    batch: &TrainBatch,
) -> f64 {
    let mut counts = CorruptedCounts::default();
    for i in 0..batch.len() {
        let u = batch.users[i];
        let s_p = forward(state, prop, u, batch.positives[i]).0;
        let neg_scores: Vec<f64> =
            batch.negatives_of(i).iter().map(|&n| forward(state, prop, u, n).0).collect();
        counts.merge(corrupted_counts(&[s_p], &neg_scores, boundary_reference(state, loss, u)));
    }
    rate_from(loss, &counts)
}

#[derive(Debug, Default)]
struct EpochStats {
    loss_total: f64,
    loss_pos: f64,
    loss_neg: f64,
    counts: CorruptedCounts,
    instances: usize,
}

enum BatchFailure {
    NonFiniteLoss,
    NonFiniteGrad(&'static str),
}

/// Loss readout for one batch, before any optimizer step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchBreakdown {
    /// Summed loss over every instance (and both sides) in the batch.
    pub total: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    pub counts: CorruptedCounts,
}

impl BatchBreakdown {
    fn absorb(&mut self, lv: &LossValue) {
        self.total += lv.total;
        self.l_pos += lv.l_pos;
        self.l_neg += lv.l_neg;
    }
}

/// Total loss and parameter gradients of one batch, with no optimizer step.
/// This is the inner computation of the training loop, exposed so gradient
/// checks can compare the returned buffer against finite differences of
/// `total`. For GCN models the graph encoder must already be built (see
/// [`ModelState::ensure_graph`]); the returned buffer has propagated-space
/// contributions already pulled back onto the raw embedding rows.
pub fn batch_gradients(
    state: &ModelState,
    loss: LossSpec,
    batch: &TrainBatch,
) -> (BatchBreakdown, GradBuffer) {
    let prop = state.propagate();
    let prop = prop.as_ref();
    let mut buf = GradBuffer::new(state.d);
    let mut bd = BatchBreakdown::default();
    for i in 0..batch.len() {
        let u = batch.users[i];
        let p = batch.positives[i];
        let negs = batch.negatives_of(i);
        match loss {
            LossSpec::PairwiseLnsig => {
                let (s_p, tr_p) = forward(state, prop, u, p);
                let mut d_sp = 0.0;
                let mut neg_scores = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (s_n, tr_n) = forward(state, prop, u, n);
                    let lv = pairwise_bpr_loss(s_p, s_n);
                    d_sp += lv.d_pos[0];
                    grad_score_traced(state, prop, u, n, &tr_n, lv.d_neg[0], &mut buf);
                    bd.absorb(&lv);
                    neg_scores.push(s_n);
                }
                grad_score_traced(state, prop, u, p, &tr_p, d_sp, &mut buf);
                bd.counts.merge(corrupted_counts(&[s_p], &neg_scores, None));
            }
            LossSpec::UibLnsig { alpha } => {
                let b = boundary(state, u);
                let (s_p, tr_p) = forward(state, prop, u, p);
                let mut neg_scores = Vec::with_capacity(negs.len());
                let mut neg_traces = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (s_n, tr_n) = forward(state, prop, u, n);
                    neg_scores.push(s_n);
                    neg_traces.push(tr_n);
                }
                let lv = uib_loss(b, &[s_p], &neg_scores, alpha, Phi::LnSigmoid);
                grad_score_traced(state, prop, u, p, &tr_p, lv.d_pos[0], &mut buf);
                for ((&n, tr_n), &d_sn) in negs.iter().zip(&neg_traces).zip(&lv.d_neg) {
                    grad_score_traced(state, prop, u, n, tr_n, d_sn, &mut buf);
                }
                grad_boundary(state, u, lv.d_boundary, &mut buf);
                bd.absorb(&lv);
                bd.counts.merge(corrupted_counts(&[s_p], &neg_scores, Some(b)));
            }
            LossSpec::PointwiseCe => {
                let (s_p, tr_p) = forward(state, prop, u, p);
                let lv = pointwise_ce_loss(s_p, 1);
                grad_score_traced(state, prop, u, p, &tr_p, lv.d_pos[0], &mut buf);
                bd.absorb(&lv);
                let mut neg_scores = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (s_n, tr_n) = forward(state, prop, u, n);
                    let lv_n = pointwise_ce_loss(s_n, 0);
                    grad_score_traced(state, prop, u, n, &tr_n, lv_n.d_neg[0], &mut buf);
                    bd.absorb(&lv_n);
                    neg_scores.push(s_n);
                }
                bd.counts.merge(corrupted_counts(&[s_p], &neg_scores, Some(0.0)));
            }
            LossSpec::Sml { lambda, gamma } => {
                let (m_u, n_u) = {
                    let m = state.margins.as_ref().expect("sml model carries margins");
                    (m.m[u as usize], m.n[u as usize])
                };
                let (s_up, tr_p) = forward(state, prop, u, p);
                let mut d_sup = 0.0;
                let mut neg_scores = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (s_un, tr_n) = forward(state, prop, u, n);
                    let s_np = score_item_item(state, n, p);
                    let lv = sml_loss(s_up, s_un, s_np, m_u, n_u, lambda, gamma);
                    d_sup += lv.d_pos[0];
                    grad_score_traced(state, prop, u, n, &tr_n, lv.d_neg[0], &mut buf);
                    grad_item_item(state, n, p, lv.d_np, &mut buf);
                    buf.add_m(u, lv.d_m);
                    buf.add_n(u, lv.d_n);
                    bd.absorb(&lv);
                    neg_scores.push(s_un);
                }
                grad_score_traced(state, prop, u, p, &tr_p, d_sup, &mut buf);
                bd.counts.merge(corrupted_counts(&[s_up], &neg_scores, None));
            }
            LossSpec::SmlUib { alpha, lambda, gamma } => {
                let (m_u, n_u) = {
                    let m = state.margins.as_ref().expect("sml model carries margins");
                    (m.m[u as usize], m.n[u as usize])
                };
                let b = boundary(state, u);
                let (s_up, tr_p) = forward(state, prop, u, p);
                let mut d_sup = 0.0;
                let mut neg_scores = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (s_un, tr_n) = forward(state, prop, u, n);
                    let s_np = score_item_item(state, n, p);
                    let lv = sml_uib_loss(s_up, s_un, b, s_np, m_u, n_u, alpha, lambda, gamma);
                    d_sup += lv.d_pos[0];
                    grad_score_traced(state, prop, u, n, &tr_n, lv.d_neg[0], &mut buf);
                    grad_item_item(state, n, p, lv.d_np, &mut buf);
                    grad_boundary(state, u, lv.d_boundary, &mut buf);
                    buf.add_m(u, lv.d_m);
                    buf.add_n(u, lv.d_n);
                    bd.absorb(&lv);
                    neg_scores.push(s_un);
                }
                grad_score_traced(state, prop, u, p, &tr_p, d_sup, &mut buf);
                bd.counts.merge(corrupted_counts(&[s_up], &neg_scores, Some(b)));
            }
        }
    }
    if state.kind == ModelKind::Gcn {
        let enc = state.graph.as_ref().expect("graph encoder must be built before training");
        buf.finalize_gcn(enc, state.user_count());
    }
    (bd, buf)
}

fn run_batch(
    state: &mut ModelState,
    opt: &mut AdagradState,
    config: &TrainConfig,
    batch: &TrainBatch,
    stats: &mut EpochStats,
) -> Result<(), BatchFailure> {
    let (bd, buf) = batch_gradients(state, config.loss, batch);
    if !bd.total.is_finite() {
        return Err(BatchFailure::NonFiniteLoss);
    }
    if let Some(tensor) = bad_tensor(&buf) {
        return Err(BatchFailure::NonFiniteGrad(tensor));
    }
    stats.loss_total += bd.total;
    stats.loss_pos += bd.l_pos;
    stats.loss_neg += bd.l_neg;
    stats.counts.merge(bd.counts);
    adagrad_step(state, opt, &buf, config.eta, config.tau + config.upsilon);
    stats.instances += batch.len();
    Ok(())
}

/// Run one epoch of `batches` batches. In parallel mode the sampler runs
/// one step ahead of the update loop over a bounded handoff; the sampler
/// owns the RNG in both modes, so the batch sequence — and therefore the
/// result — is identical.
fn run_epoch(
    state: &mut ModelState,
    opt: &mut AdagradState,
    config: &TrainConfig,
    train_set: &InteractionSet,
    rng: &mut ChaCha8Rng,
    batches: usize,
    stats: &mut EpochStats,
) -> Result<(), BatchFailure> {
    if config.exec.is_parallel() {
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel::<TrainBatch>(1);
            let (bs, m) = (config.batch_size, config.m_neg);
            scope.spawn(move || {
                for _ in 0..batches {
                    if tx.send(sample_batch(train_set, bs, m, rng)).is_err() {
                        break; // consumer bailed out mid-epoch
                    }
                }
            });
            for batch in rx {
                run_batch(state, opt, config, &batch, stats)?;
            }
            Ok(())
        })
    } else {
        for _ in 0..batches {
            let batch = sample_batch(train_set, config.batch_size, config.m_neg, rng);
            run_batch(state, opt, config, &batch, stats)?;
        }
        Ok(())
    }
}

/// Train a model to the best validation NDCG@10 checkpoint.
///
/// Every epoch runs `⌈|train| / batch_size⌉` batches of `batch_size`
/// positives drawn uniformly with replacement, then evaluates the
/// validation candidates. The checkpoint with the best validation NDCG@10
/// is kept; `patience` stale evaluations in a row stop the run. A
/// non-finite loss or gradient aborts the run, returning the best earlier
/// checkpoint when one exists and an error otherwise. Runs are reproducible
/// from the config alone.
pub fn train(config: &TrainConfig, bundle: &DataBundle) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut state = config.model.init(
        config.loss,
        bundle.train.user_count(),
        bundle.train.item_count(),
        config.seed,
    );
    state.ensure_graph(&bundle.train)?;
    let mut opt = AdagradState::new(&state);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SAMPLER_STREAM));
    let batches_per_epoch = bundle.train.len().div_ceil(config.batch_size);
    let has_valid = bundle.has_validation();

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, f64, ModelState)> = None;
    let mut since_improve = 0usize;
    let mut stopped_early = false;
    let mut diverged_at = None;

    for epoch in 0..config.max_epochs {
        let mut stats = EpochStats::default();
        let outcome = run_epoch(
            &mut state,
            &mut opt,
            config,
            &bundle.train,
            &mut rng,
            batches_per_epoch,
            &mut stats,
        );
        if let Err(failure) = outcome {
            if best.is_none() {
                return Err(match failure {
                    BatchFailure::NonFiniteLoss => TrainError::Diverged { epoch },
                    BatchFailure::NonFiniteGrad(tensor) => {
                        TrainError::NonFiniteGradient { tensor: tensor.into(), epoch }
                    }
                });
            }
            diverged_at = Some(epoch);
            break;
        }

        let mut record = EpochRecord {
            epoch,
            loss_total: stats.loss_total / stats.instances as f64,
            loss_pos: stats.loss_pos / stats.instances as f64,
            loss_neg: stats.loss_neg / stats.instances as f64,
            corrupted_rate: rate_from(config.loss, &stats.counts),
            val_hit1: None,
            val_hit10: None,
            val_ndcg10: None,
            val_mrr10: None,
        };
        if has_valid {
            let report = match evaluate(
                &state.frozen(),
                &bundle.candidates,
                HoldoutRole::Valid,
                &[1, 10],
                config.exec,
            ) {
                Ok(report) => report,
                Err(EvalError::NonFiniteScore { .. }) if best.is_some() => {
                    diverged_at = Some(epoch);
                    break;
                }
                Err(EvalError::NonFiniteScore { .. }) => {
                    return Err(TrainError::Diverged { epoch });
                }
                Err(e) => return Err(e.into()),
            };
            let at1 = report.row(1).expect("k=1 present");
            let at10 = report.row(10).expect("k=10 present");
            record.val_hit1 = Some(at1.hit);
            record.val_hit10 = Some(at10.hit);
            record.val_ndcg10 = Some(at10.ndcg);
            record.val_mrr10 = Some(at10.mrr);
            history.push(record);
            if best.as_ref().is_none_or(|&(_, best_val, _)| at10.ndcg > best_val) {
                best = Some((epoch, at10.ndcg, state.clone()));
                since_improve = 0;
            } else {
                since_improve += 1;
                if since_improve >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
        } else {
            history.push(record);
        }
    }

    let (best_epoch, _, best_state) = match best {
        Some(found) => found,
        // no validation set: the final state is the checkpoint
        None => (history.len() - 1, f64::NAN, state),
    };
    Ok(TrainOutcome {
        state: best_state,
        history,
        best_epoch,
        stopped_early,
        diverged_at,
        batches_per_epoch,
    })
}

/// Run the same config across seeds; reports are meant for
/// [`aggregate`](crate::evaluation::aggregate).
pub fn train_multi_seed(
    config: &TrainConfig,
    seeds: &[u64],
    bundle: &DataBundle,
) -> Result<Vec<TrainOutcome>, TrainError> {
    map_slice(config.exec, seeds, |&seed| {
        let mut cfg = config.clone();
        cfg.seed = seed;
        train(&cfg, bundle)
    })
    .into_iter()
    .collect()
}

/// One evaluated grid point; `value` is the best validation NDCG@10.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub assignment: Vec<(String, f64)>,
    pub value: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub diverged: bool,
}

/// Exhaustive grid-search table plus the winning configuration.
#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub points: Vec<GridPoint>,
    pub best_index: usize,
    pub best_config: TrainConfig,
}

pub(crate) fn apply_param(
    config: &mut TrainConfig,
    key: &str,
    value: f64,
) -> Result<(), TrainError> {
    let as_count = |value: f64, key: &str| -> Result<usize, TrainError> {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(TrainError::BadConfig(format!(
                "grid key {key} needs a nonnegative integer, got {value}"
            )));
        }
        Ok(value as usize)
    };
    match key {
        "eta" => config.eta = value,
        "tau" => config.tau = value,
        "upsilon" => config.upsilon = value,
        "m_neg" => config.m_neg = as_count(value, key)?,
        "d" => config.model.d = as_count(value, key)?,
        "k_layers" => config.model.k_layers = as_count(value, key)?,
        "alpha" => match &mut config.loss {
            LossSpec::UibLnsig { alpha } | LossSpec::SmlUib { alpha, .. } => *alpha = value,
            other => {
                return Err(TrainError::BadConfig(format!(
                    "alpha grid needs a boundary loss, config has {}",
                    other.name()
                )))
            }
        },
        "lambda" => match &mut config.loss {
            LossSpec::Sml { lambda, .. } | LossSpec::SmlUib { lambda, .. } => *lambda = value,
            other => {
                return Err(TrainError::BadConfig(format!(
                    "lambda grid needs an SML loss, config has {}",
                    other.name()
                )))
            }
        },
        "gamma" => match &mut config.loss {
            LossSpec::Sml { gamma, .. } | LossSpec::SmlUib { gamma, .. } => *gamma = value,
            other => {
                return Err(TrainError::BadConfig(format!(
                    "gamma grid needs an SML loss, config has {}",
                    other.name()
                )))
            }
        },
        other => {
            return Err(TrainError::BadConfig(format!("unknown grid key {other:?}")));
        }
    }
    Ok(())
}

/// Evaluate the cartesian product of the grids and pick the assignment with
/// the best validation NDCG@10. A grid point that diverges is recorded with
/// `value = -∞` rather than failing the whole search.
pub fn grid_search(
    template: &TrainConfig,
    grids: &[(String, Vec<f64>)],
    bundle: &DataBundle,
) -> Result<GridReport, TrainError> {
    if grids.is_empty() || grids.iter().any(|(_, values)| values.is_empty()) {
        return Err(TrainError::BadConfig("grid must have at least one value per key".into()));
    }
    if !bundle.has_validation() {
        return Err(TrainError::BadConfig(
            "grid search selects on validation NDCG@10 and needs validation candidates".into(),
        ));
    }
    let total: usize = grids.iter().map(|(_, values)| values.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut config = template.clone();
        let mut assignment = Vec::with_capacity(grids.len());
        for (key, values) in grids {
            let value = values[rem % values.len()];
            rem /= values.len();
            apply_param(&mut config, key, value)?;
            assignment.push((key.clone(), value));
        }
        match train(&config, bundle) {
            Ok(outcome) => points.push(GridPoint {
                assignment,
                value: outcome.history[outcome.best_epoch]
                    .val_ndcg10
                    .expect("has_validation was checked above"),
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.history.len(),
                diverged: outcome.diverged_at.is_some(),
            }),
            Err(TrainError::Diverged { epoch }) => points.push(GridPoint {
                assignment,
                value: f64::NEG_INFINITY,
                best_epoch: 0,
                epochs_run: epoch,
                diverged: true,
            }),
            Err(e) => return Err(e),
        }
    }
    let best_index = points
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.value.partial_cmp(&b.value).expect("values never NaN"))
        .map(|(i, _)| i)
        .expect("grid is nonempty");
    if points[best_index].value == f64::NEG_INFINITY {
        return Err(TrainError::BadConfig("every grid point diverged".into()));
    }
    let mut best_config = template.clone();
    for (key, value) in &points[best_index].assignment {
        apply_param(&mut best_config, key, *value)?;
    }
    Ok(GridReport { points, best_index, best_config })
}
