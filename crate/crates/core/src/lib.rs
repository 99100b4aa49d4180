//! Core library for implicit-feedback recommendation experiments built around
//! interest-boundary training objectives.
//!
//! The crate is organised around five concerns:
//!
//! * [`dataset`] — ingesting raw interaction logs, leave-one-out splitting,
//!   frozen evaluation candidate sets and minibatch sampling;
//! * [`scorers`] — the model zoo (matrix factorisation, an NCF-style MLP,
//!   metric embeddings, LightGCN) plus the learned per-user boundary head;
//! * [`losses`] — pointwise, pairwise and boundary-based hybrid objectives
//!   together with their score-space gradients;
//! * [`training`] — Adagrad, the epoch loop, early stopping and grid search;
//! * [`evaluation`] — leave-one-out ranking metrics and the analysis suite
//!   (boundary sweeps, boundary distributions, loss-weight studies).
//!
//! Everything is deterministic given a seed: random state flows through
//! ChaCha8 generators derived with [`exec::derive_seed`], and the optional
//! `parallel` feature (rayon) only changes wall-clock time, never results.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod losses;
pub mod matrix;
pub mod presets;
pub mod scorers;
pub mod synth;
pub mod training;

pub use error::{DataError, EvalError, TrainError};
pub use exec::ExecMode;
pub use matrix::Matrix;
