//! Leave-one-out ranking evaluation over frozen candidates, plus the
//! boundary analyses: offset sweeps (precision/recall/F1 against the full
//! catalog), boundary distributions, and the α behavioral study.

mod alpha;
mod boundary;
mod metrics;

pub use alpha::{alpha_study, AlphaStudyRow};
pub use boundary::{
    boundary_distribution, boundary_sweep, default_offsets, BoundaryDistribution, BoundaryReport,
    HistBin, OffsetRow,
};
pub use metrics::{
    aggregate, check_coverage, evaluate, rank_metrics, AggregateRow, InstanceMetrics,
    MetricsReport, MetricsRow, RankMetrics,
};
