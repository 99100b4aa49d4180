//! Ranking metrics over a candidate list with exactly one positive.

use crate::dataset::{EvalCandidates, HoldoutRole, InteractionSet};
use crate::error::EvalError;
use crate::exec::{map_slice, ExecMode};
use crate::scorers::FrozenScorer;
use serde::{Deserialize, Serialize};

/// Hit/NDCG/MRR at one cutoff for one ranking instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub hit: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

/// Rank the positive among the candidates and read off the metrics.
///
/// The rank is `1 + |{negatives with s ≥ s_positive}|`: ties are broken
/// pessimistically against the positive, so an all-equal score vector puts
/// the positive last rather than inflating the metrics.
///
/// A non-finite score is rejected with its index; [`evaluate`] maps that to
/// [`EvalError::NonFiniteScore`] with the user/item attached.
pub fn rank_metrics(
    scores: &[f64],
    positive_index: usize,
    k: usize,
) -> Result<RankMetrics, usize> {
    assert!(positive_index < scores.len());
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(bad);
    }
    let s_pos = scores[positive_index];
    let rank = 1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive_index && s >= s_pos)
        .count();
    Ok(if rank <= k {
        RankMetrics {
            hit: 1.0,
            ndcg: 1.0 / ((rank as f64) + 1.0).log2(),
            mrr: 1.0 / rank as f64,
        }
    } else {
        RankMetrics { hit: 0.0, ndcg: 0.0, mrr: 0.0 }
    })
}

/// Raw per-instance metrics, retained for audits and aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub user: u32,
    /// Aligned with the report's `k_values`.
    pub at_k: Vec<RankMetrics>,
}

/// Instance-averaged metrics at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub hit: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

/// Evaluation result for one model snapshot on one candidate role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub role: HoldoutRole,
    pub k_values: Vec<usize>,
    pub rows: Vec<MetricsRow>,
    pub per_instance: Vec<InstanceMetrics>,
}

impl MetricsReport {
    pub fn row(&self, k: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// Validation NDCG@10, the early-stopping criterion.
    pub fn ndcg10(&self) -> f64 {
        self.row(10).map_or(f64::NAN, |r| r.ndcg)
    }
}

/// Score every candidate instance and average the metrics over instances.
/// Users fan out in parallel under [`ExecMode::Parallel`]; results are
/// collected in instance order, so both modes produce identical reports.
pub fn evaluate(
    scorer: &FrozenScorer<'_>,
    candidates: &EvalCandidates,
    role: HoldoutRole,
    k_values: &[usize],
    mode: ExecMode,
) -> Result<MetricsReport, EvalError> {
    let entries = candidates.entries(role);
    if entries.is_empty() {
        return Err(EvalError::NoInstances);
    }
    let per_instance: Vec<InstanceMetrics> = map_slice(mode, entries, |entry| {
        let mut scores = Vec::with_capacity(entry.negatives.len() + 1);
        scores.push(scorer.score(entry.user, entry.positive));
        scores.extend(entry.negatives.iter().map(|&n| scorer.score(entry.user, n)));
        let at_k = k_values
            .iter()
            .map(|&k| {
                rank_metrics(&scores, 0, k).map_err(|index| EvalError::NonFiniteScore {
                    user: entry.user,
                    item: if index == 0 { entry.positive } else { entry.negatives[index - 1] },
                    index,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InstanceMetrics { user: entry.user, at_k })
    })
    .into_iter()
    .collect::<Result<_, EvalError>>()?;

    let n = per_instance.len() as f64;
    let rows = k_values
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let mut row = MetricsRow { k, hit: 0.0, ndcg: 0.0, mrr: 0.0 };
            for inst in &per_instance {
                row.hit += inst.at_k[ki].hit;
                row.ndcg += inst.at_k[ki].ndcg;
                row.mrr += inst.at_k[ki].mrr;
            }
            row.hit /= n;
            row.ndcg /= n;
            row.mrr /= n;
            row
        })
        .collect();
    Ok(MetricsReport { role, k_values: k_values.to_vec(), rows, per_instance })
}

/// Mean ± sample standard deviation over repeated runs, per cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    pub hit_mean: f64,
    pub hit_std: f64,
    pub ndcg_mean: f64,
    pub ndcg_std: f64,
    pub mrr_mean: f64,
    pub mrr_std: f64,
    pub runs: usize,
}

/// Aggregate per-run reports (all on the same k set) into mean ± std rows.
/// Single-run inputs report a std of 0.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Vec<AggregateRow>, EvalError> {
    let first = reports.first().ok_or(EvalError::NoInstances)?;
    let mean_std = |xs: &[f64]| -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return (mean, 0.0);
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    };
    first
        .k_values
        .iter()
        .map(|&k| {
            let pull = |f: fn(&MetricsRow) -> f64| -> Result<Vec<f64>, EvalError> {
                reports
                    .iter()
                    .map(|r| r.row(k).map(f).ok_or(EvalError::NoInstances))
                    .collect()
            };
            let (hit_mean, hit_std) = mean_std(&pull(|r| r.hit)?);
            let (ndcg_mean, ndcg_std) = mean_std(&pull(|r| r.ndcg)?);
            let (mrr_mean, mrr_std) = mean_std(&pull(|r| r.mrr)?);
            Ok(AggregateRow {
                k,
                hit_mean,
                hit_std,
                ndcg_mean,
                ndcg_std,
                mrr_mean,
                mrr_std,
                runs: reports.len(),
            })
        })
        .collect()
}

/// Verify that every user holding out an item in `split_role` has candidate
/// entries — catches stale candidate files built from a different split.
pub fn check_coverage(
    candidates: &EvalCandidates,
    role: HoldoutRole,
    split_role: &InteractionSet,
) -> Result<(), EvalError> {
    use std::collections::HashSet;
    let covered: HashSet<u32> = candidates.entries(role).iter().map(|e| e.user).collect();
    for u in split_role.active_users() {
        if !covered.contains(&u) {
            return Err(EvalError::MissingUser { user: u });
        }
    }
    Ok(())
}
