//! Deterministic synthetic interaction data at desk scale.
//!
//! The generator plants the two structures the analyses care about: block
//! preference (users favor items of their own group, so there is signal to
//! rank) and a popularity skew (so negatives are not exchangeable). Sizes
//! default to roughly one-tenth-scale stand-ins for the public datasets,
//! which keeps the full train→sweep→study pipeline runnable in seconds.

use crate::dataset::{InteractionSet, Role};
use crate::exec::derive_seed;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shape and texture of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    /// Preference blocks; users pick mostly within their own block.
    pub groups: usize,
    /// Interactions per user, drawn uniformly from this inclusive range.
    /// The minimum must be ≥ 3 so the leave-one-out split keeps everyone.
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Weight multiplier for items in the user's own group.
    pub affinity: f64,
    /// Popularity decay: item at popularity rank r has weight 1/(r+1)^zipf.
    pub zipf: f64,
    pub seed: u64,
}

/// Sub-seed streams, offset from user indices.
const STREAM_POPULARITY: u64 = 1 << 40;
const STREAM_ITEM_GROUPS: u64 = 2 << 40;
const STREAM_USER_BASE: u64 = 3 << 40;

/// Tenth-scale stand-in with MovieLens-like density (every user rates
/// plenty of items).
pub fn ml1m_desk() -> SynthSpec {
    SynthSpec {
        users: 480,
        items: 320,
        groups: 8,
        min_per_user: 16,
        max_per_user: 28,
        affinity: 6.0,
        zipf: 0.8,
        seed: 41,
    }
}

/// Smaller, sparser stand-in in the LastFM size class.
pub fn lastfm_desk() -> SynthSpec {
    SynthSpec {
        users: 220,
        items: 260,
        groups: 6,
        min_per_user: 12,
        max_per_user: 22,
        affinity: 5.0,
        zipf: 0.7,
        seed: 42,
    }
}

/// Generate the full interaction set (role `All`, ready for splitting).
///
/// Per-user sampling is weighted without replacement (the key-based
/// reservoir scheme: item i wins with key u_i^(1/w_i)), with weights
/// `popularity × affinity-if-same-group`. Every user gets its own derived
/// RNG stream, so edits to one knob never reshuffle unrelated users.
pub fn generate(spec: &SynthSpec) -> InteractionSet {
    assert!(spec.users > 0 && spec.items > 0 && spec.groups > 0);
    assert!(
        spec.min_per_user >= 3 && spec.min_per_user <= spec.max_per_user,
        "need at least 3 interactions per user to survive the split"
    );
    assert!(spec.max_per_user <= spec.items, "cannot pick more items than exist");
    assert!(spec.affinity >= 1.0 && spec.zipf >= 0.0);

    // popularity rank permutation, detached from item ids
    let mut rank_of: Vec<usize> = (0..spec.items).collect();
    rank_of.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_POPULARITY)));
    let popularity: Vec<f64> =
        rank_of.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(spec.zipf)).collect();

    let mut group_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_ITEM_GROUPS));
    let item_group: Vec<usize> =
        (0..spec.items).map(|_| group_rng.random_range(0..spec.groups)).collect();

    let mut pairs = Vec::new();
    for u in 0..spec.users {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_USER_BASE + u as u64));
        let count = rng.random_range(spec.min_per_user..=spec.max_per_user);
        let user_group = rng.random_range(0..spec.groups);
        let mut keyed: Vec<(f64, u32)> = (0..spec.items)
            .map(|i| {
                let weight = popularity[i]
                    * if item_group[i] == user_group { spec.affinity } else { 1.0 };
                (rng.random::<f64>().powf(1.0 / weight), i as u32)
            })
            .collect();
        keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        for &(_, item) in keyed.iter().take(count) {
            pairs.push((u as u32, item));
        }
    }
    InteractionSet::from_pairs(Role::All, spec.users, spec.items, pairs)
}
