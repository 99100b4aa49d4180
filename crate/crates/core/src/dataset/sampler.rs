//! Uniform minibatch sampling: positives with replacement from the train
//! pairs, negatives by rejection from the user's unobserved items.

use super::interactions::InteractionSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A sampled training batch. Negatives are stored row-major:
/// `negatives[i * m_neg .. (i + 1) * m_neg]` belongs to positive `i`.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub users: Vec<u32>,
    pub positives: Vec<u32>,
    pub m_neg: usize,
    pub negatives: Vec<u32>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Negatives attached to positive `i`.
    pub fn negatives_of(&self, i: usize) -> &[u32] {
        &self.negatives[i * self.m_neg..(i + 1) * self.m_neg]
    }
}

/// Draw `batch_size` (user, positive) pairs uniformly with replacement and
/// attach `m_neg` uniform unobserved negatives to each. Rejection sampling
/// against the user's train row always terminates because a split never
/// leaves a user covering the whole catalog (two holdouts are removed).
pub fn sample_batch(
    train: &InteractionSet,
    batch_size: usize,
    m_neg: usize,
    rng: &mut ChaCha8Rng,
) -> TrainBatch {
    assert!(batch_size >= 1 && m_neg >= 1, "batch_size and m_neg must be positive");
    assert!(!train.is_empty(), "cannot sample from an empty train set");
    let item_count = train.item_count() as u32;
    let mut users = Vec::with_capacity(batch_size);
    let mut positives = Vec::with_capacity(batch_size);
    let mut negatives = Vec::with_capacity(batch_size * m_neg);
    for _ in 0..batch_size {
        let (u, p) = train.pair_at(rng.random_range(0..train.len()));
        let row = train.row(u);
        assert!(
            row.len() < item_count as usize,
            "user {u} has interacted with the whole catalog; no negatives exist"
        );
        users.push(u);
        positives.push(p);
        for _ in 0..m_neg {
            let n = loop {
                let cand = rng.random_range(0..item_count);
                if row.binary_search(&cand).is_err() {
                    break cand;
                }
            };
            negatives.push(n);
        }
    }
    TrainBatch { users, positives, m_neg, negatives }
}
