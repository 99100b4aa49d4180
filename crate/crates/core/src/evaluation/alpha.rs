//! The α behavioral study: train the same config across a list of α values
//! and watch what the class-balance knob does to the boundary and to the
//! score populations on either side of it.

use crate::dataset::HoldoutRole;
use crate::error::TrainError;
use crate::evaluation::evaluate;
use crate::exec::derive_seed;
use crate::scorers::boundary;
use crate::training::{apply_param, train, DataBundle, TrainConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sub-seed stream for the study's negative sampling, distinct from the
/// trainer's streams; the user id fills the low 32 bits.
const STUDY_NEG_STREAM: u64 = 0xA1FA << 32;

/// What one α value did: ranking quality, where the boundary sits, and how
/// spread out the scores are on each side of it (score − b_u deltas).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStudyRow {
    pub alpha: f64,
    /// Test NDCG@10 of the best-validation checkpoint.
    pub ndcg10: f64,
    /// Mean b_u over users with train interactions.
    pub boundary_mean: f64,
    /// Median and interquartile range of s(u,p) − b_u over train positives.
    pub pos_median: f64,
    pub pos_iqr: f64,
    /// Median and IQR of s(u,n) − b_u over per-user sampled negatives
    /// (as many per user as that user has train positives).
    pub neg_median: f64,
    pub neg_iqr: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Linearly interpolated percentile (the convention most numeric stacks
/// default to): index (n−1)·p into the sorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn iqr(values: &mut Vec<f64>) -> (f64, f64) {
    values.sort_unstable_by(f64::total_cmp);
    let median = percentile(values, 0.5);
    (median, percentile(values, 0.75) - percentile(values, 0.25))
}

/// Train one model per α (all else shared, same seed) and measure each.
///
/// The positive deltas pool s(u,p) − b_u over every train interaction; the
/// negative deltas pool the same number of uniformly sampled unobserved
/// items per user, so both populations weight users identically.
pub fn alpha_study(
    template: &TrainConfig,
    alphas: &[f64],
    bundle: &DataBundle,
) -> Result<Vec<AlphaStudyRow>, TrainError> {
    if alphas.is_empty() {
        return Err(TrainError::BadConfig("alpha study needs at least one alpha".into()));
    }
    let catalog = bundle.train.item_count() as u32;
    alphas
        .iter()
        .map(|&alpha| {
            let mut config = template.clone();
            apply_param(&mut config, "alpha", alpha)?;
            let outcome = train(&config, bundle)?;
            let state = &outcome.state;
            let frozen = state.frozen();

            let ndcg10 = evaluate(
                &frozen,
                &bundle.candidates,
                HoldoutRole::Test,
                &[10],
                config.exec,
            )?
            .ndcg10();

            let mut boundary_sum = 0.0;
            let mut users = 0usize;
            let mut pos_deltas = Vec::with_capacity(bundle.train.len());
            let mut neg_deltas = Vec::with_capacity(bundle.train.len());
            for u in bundle.train.active_users() {
                let b = boundary(state, u);
                boundary_sum += b;
                users += 1;
                let row = bundle.train.row(u);
                for &p in row {
                    pos_deltas.push(frozen.score(u, p) - b);
                }
                let observed: Vec<u32> = bundle
                    .train
                    .row(u)
                    .iter()
                    .chain(bundle.valid.row(u))
                    .chain(bundle.test.row(u))
                    .copied()
                    .collect();
                assert!(
                    observed.len() < catalog as usize,
                    "user {u} has observed the whole catalog; no negatives to sample"
                );
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    config.seed,
                    STUDY_NEG_STREAM | u as u64,
                ));
                for _ in 0..row.len() {
                    let n = loop {
                        let cand = rng.random_range(0..catalog);
                        if !observed.contains(&cand) {
                            break cand;
                        }
                    };
                    neg_deltas.push(frozen.score(u, n) - b);
                }
            }
            let (pos_median, pos_iqr) = iqr(&mut pos_deltas);
            let (neg_median, neg_iqr) = iqr(&mut neg_deltas);
            Ok(AlphaStudyRow {
                alpha,
                ndcg10,
                boundary_mean: boundary_sum / users as f64,
                pos_median,
                pos_iqr,
                neg_median,
                neg_iqr,
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.history.len(),
            })
        })
        .collect()
}
