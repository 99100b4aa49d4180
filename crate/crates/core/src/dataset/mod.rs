//! Data handling: raw-log ingestion, deterministic leave-one-out splits,
//! frozen evaluation candidates and training-batch sampling.

mod candidates;
mod ids;
mod ingest;
mod interactions;
mod sampler;

pub use candidates::{build_candidates, CandidateEntry, EvalCandidates, HoldoutRole};
pub use ids::IdMap;
pub use ingest::{ingest, ingest_reader, ingest_with, Format, Ingested};
pub use interactions::{split_leave_one_out, InteractionSet, Role, Split, SplitSummary};
pub use sampler::{sample_batch, TrainBatch};
