//! Execution-mode plumbing: a tiny switch between sequential and rayon
//! data-parallel evaluation, plus deterministic seed derivation.
//!
//! The contract is that `Sequential` and `Parallel` produce bit-identical
//! results — per-item work is independent and outputs are collected in input
//! order, so the only thing parallelism changes is wall-clock time. The
//! criterion bench suite (`benches/parallel.rs`) compares the two modes.

use serde::{Deserialize, Serialize};

/// How embarrassingly-parallel loops (per-user evaluation, sweeps,
/// multi-seed runs) are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Plain iterator loop on the calling thread.
    Sequential,
    /// Rayon work-stealing pool. Falls back to sequential when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when this mode will actually fan out to multiple threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Map `f` over a slice, collecting results in input order.
pub fn map_slice<'a, I, T, F>(mode: ExecMode, items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// SplitMix64 step; the standard way to spawn independent sub-seeds from a
/// master seed without correlation between streams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream-specific seed from a master seed and a stream index
/// (user id, epoch number, run replicate, ...). Two passes of SplitMix64 so
/// that neighbouring `(seed, stream)` pairs land far apart.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(stream))
}
