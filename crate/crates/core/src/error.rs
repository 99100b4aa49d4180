//! Error types shared across the crate. Data handling and training failures
//! are kept separate because callers react differently: bad input files are
//! a user problem (exit with a message), while divergence mid-run is a
//! recoverable training event (fall back to the last good checkpoint).

use std::path::PathBuf;
use thiserror::Error;

/// Problems with raw interaction files, candidate files or checkpoints.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },

    #[error("dataset is empty after filtering")]
    Empty,

    #[error("unknown dataset format {0:?} (expected movielens-ratings, lastfm-tsv or amazon-csv)")]
    UnknownFormat(String),

    #[error("candidate file {path}: {msg}")]
    BadCandidates { path: PathBuf, msg: String },

    #[error("checkpoint {path}: {msg}")]
    BadCheckpoint { path: PathBuf, msg: String },

    #[error("user {user} has only {have} unobserved items, need {need} evaluation negatives")]
    NotEnoughNegatives { user: usize, have: usize, need: usize },
}

impl DataError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        DataError::Malformed { path: path.into(), line, msg: msg.into() }
    }
}

/// Failures during evaluation or analysis.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("non-finite score at candidate position {index} (user {user}, item {item})")]
    NonFiniteScore { user: u32, item: u32, index: usize },

    #[error("model was not trained with a boundary loss; this analysis needs b_u")]
    NoBoundary,

    #[error("no evaluation instances to aggregate")]
    NoInstances,

    #[error("user {user} is active in the split but missing from the candidate file")]
    MissingUser { user: u32 },
}

/// Failures inside the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    /// The loss went non-finite and no finite checkpoint exists to fall
    /// back to (divergence in the very first epoch).
    #[error("training diverged at epoch {epoch} with no usable checkpoint")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("non-finite gradient in {tensor} at epoch {epoch}")]
    NonFiniteGradient { tensor: String, epoch: usize },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}
