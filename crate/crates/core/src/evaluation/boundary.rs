//! Boundary-as-classifier analyses: the offset sweep and the b_u histogram.

use std::collections::HashSet;

use crate::dataset::InteractionSet;
use crate::error::EvalError;
use crate::exec::{map_slice, ExecMode};
use crate::scorers::{boundary, FrozenScorer, ModelState};
use serde::{Deserialize, Serialize};

/// The offsets swept by default: whole score units from −5 to +5.
pub fn default_offsets() -> Vec<f64> {
    (-5..=5).map(f64::from).collect()
}

/// Pooled confusion counts and micro-averaged scores at one offset δ, where
/// an item is predicted positive iff `s(u, x) > b_u + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetRow {
    pub offset: f64,
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Items predicted negative (below the shifted boundary), pooled.
    pub filtered: u64,
    /// Items predicted positive, pooled. `filtered + passed = users · catalog`.
    pub passed: u64,
}

/// Full-catalog classification quality per offset, plus the raw boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// `(user, b_u)` for every user included in the sweep.
    pub boundaries: Vec<(u32, f64)>,
    pub rows: Vec<OffsetRow>,
    pub users: usize,
    pub catalog: usize,
    /// Fraction of the catalog sitting at or below the unshifted boundary,
    /// pooled over users. `NaN` when 0 is not among the swept offsets.
    pub filter_rate_at_zero: f64,
}

impl BoundaryReport {
    /// The offset whose F1 is largest.
    pub fn best_offset(&self) -> Option<&OffsetRow> {
        self.rows
            .iter()
            .max_by(|a, b| a.f1.partial_cmp(&b.f1).expect("f1 is always finite"))
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Sweep the boundary classifier over the whole catalog.
///
/// Every user with at least one interaction in `observed` is classified
/// against every catalog item. Ground truth labels an item positive iff it
/// appears in any of the `observed` sets for that user (the union of all
/// split roles, when the caller passes them all). Precision/recall/F1 are
/// micro-averaged: confusion counts are pooled across users first.
pub fn boundary_sweep(
    scorer: &FrozenScorer<'_>,
    observed: &[&InteractionSet],
    offsets: &[f64],
    mode: ExecMode,
) -> Result<BoundaryReport, EvalError> {
    if !scorer.boundary_active() {
        return Err(EvalError::NoBoundary);
    }
    assert!(!offsets.is_empty(), "offset list must be nonempty");
    let catalog = scorer.state.item_count();
    let mut active: Vec<u32> = observed
        .iter()
        .flat_map(|set| set.active_users())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    active.sort_unstable();
    if active.is_empty() || catalog == 0 {
        return Err(EvalError::NoInstances);
    }

    type UserCounts = (f64, Vec<[u64; 4]>); // (b_u, per-offset [tp, fp, fn, tn])
    let per_user: Vec<UserCounts> = map_slice(mode, &active, |&u| {
        let positives: HashSet<u32> =
            observed.iter().flat_map(|set| set.row(u)).copied().collect();
        let b = scorer.boundary(u);
        if !b.is_finite() {
            return Err(EvalError::NonFiniteScore { user: u, item: 0, index: 0 });
        }
        let mut counts = vec![[0u64; 4]; offsets.len()];
        for x in 0..catalog as u32 {
            let s = scorer.score(u, x);
            if !s.is_finite() {
                return Err(EvalError::NonFiniteScore { user: u, item: x, index: x as usize });
            }
            let truth = positives.contains(&x);
            for (slot, &delta) in counts.iter_mut().zip(offsets) {
                let pred = s > b + delta;
                let idx = match (truth, pred) {
                    (true, true) => 0,
                    (false, true) => 1,
                    (true, false) => 2,
                    (false, false) => 3,
                };
                slot[idx] += 1;
            }
        }
        Ok((b, counts))
    })
    .into_iter()
    .collect::<Result<_, EvalError>>()?;

    let boundaries: Vec<(u32, f64)> =
        active.iter().copied().zip(per_user.iter().map(|(b, _)| *b)).collect();
    let rows: Vec<OffsetRow> = offsets
        .iter()
        .enumerate()
        .map(|(oi, &offset)| {
            let mut c = [0u64; 4];
            for (_, per_offset) in &per_user {
                for (acc, v) in c.iter_mut().zip(&per_offset[oi]) {
                    *acc += v;
                }
            }
            let [tp, fp, fn_, tn] = c;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            OffsetRow {
                offset,
                true_pos: tp,
                false_pos: fp,
                false_neg: fn_,
                true_neg: tn,
                precision,
                recall,
                f1: f1_of(precision, recall),
                filtered: fn_ + tn,
                passed: tp + fp,
            }
        })
        .collect();
    let filter_rate_at_zero = rows
        .iter()
        .find(|r| r.offset == 0.0)
        .map_or(f64::NAN, |r| ratio(r.filtered, r.filtered + r.passed));
    Ok(BoundaryReport {
        boundaries,
        rows,
        users: active.len(),
        catalog,
        filter_rate_at_zero,
    })
}

/// One histogram bucket: `[left, right)`, except the last bin which closes
/// the range on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Histogram plus moments of the per-user boundary values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryDistribution {
    pub users: Vec<u32>,
    /// Aligned with `users`.
    pub boundaries: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of {b_u}.
    pub std: f64,
    pub bins: Vec<HistBin>,
}

/// Export `{b_u}` with equal-width histogram bins and moments.
///
/// `users` restricts the export (the analysis command passes the users that
/// actually received training updates); `None` covers the whole id space.
/// A degenerate value range (all boundaries equal) widens to `[v−0.5, v+0.5]`
/// so the histogram stays well-formed.
pub fn boundary_distribution(
    state: &ModelState,
    bin_count: usize,
    users: Option<&[u32]>,
) -> Result<BoundaryDistribution, EvalError> {
    if !state.boundary_active {
        return Err(EvalError::NoBoundary);
    }
    assert!(bin_count > 0, "need at least one histogram bin");
    let users: Vec<u32> = match users {
        Some(list) => list.to_vec(),
        None => (0..state.user_count() as u32).collect(),
    };
    if users.is_empty() {
        return Err(EvalError::NoInstances);
    }
    let boundaries: Vec<f64> = users.iter().map(|&u| boundary(state, u)).collect();
    if let Some(pos) = boundaries.iter().position(|b| !b.is_finite()) {
        return Err(EvalError::NonFiniteScore { user: users[pos], item: 0, index: pos });
    }
    let n = boundaries.len() as f64;
    let mean = boundaries.iter().sum::<f64>() / n;
    let std = (boundaries.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n).sqrt();

    let (mut lo, mut hi) = boundaries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &b| (lo.min(b), hi.max(b)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bin_count as f64;
    let mut bins: Vec<HistBin> = (0..bin_count)
        .map(|i| HistBin {
            left: lo + width * i as f64,
            right: if i + 1 == bin_count { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for &b in &boundaries {
        let i = (((b - lo) / width) as usize).min(bin_count - 1);
        bins[i].count += 1;
    }
    Ok(BoundaryDistribution { users, boundaries, mean, std, bins })
}
