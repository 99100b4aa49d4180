//! Frozen evaluation candidates: for every held-out (user, item) pair, a
//! fixed list of negatives sampled once and reused by every model and seed,
//! so that metric differences come from models rather than candidate luck.

use super::interactions::InteractionSet;
use crate::error::DataError;
use crate::exec::derive_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Which held-out interaction an entry ranks against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutRole {
    Valid,
    Test,
}

impl HoldoutRole {
    fn tag(self) -> &'static str {
        match self {
            HoldoutRole::Valid => "valid",
            HoldoutRole::Test => "test",
        }
    }
}

/// One ranking instance: the held-out positive plus its fixed negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub user: u32,
    pub positive: u32,
    pub negatives: Vec<u32>,
}

/// Frozen candidate lists for both evaluation roles.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCandidates {
    pub seed: u64,
    pub n_neg: usize,
    pub user_count: usize,
    pub item_count: usize,
    pub valid: Vec<CandidateEntry>,
    pub test: Vec<CandidateEntry>,
}

impl EvalCandidates {
    pub fn entries(&self, role: HoldoutRole) -> &[CandidateEntry] {
        match role {
            HoldoutRole::Valid => &self.valid,
            HoldoutRole::Test => &self.test,
        }
    }
}

/// Draw `n_neg` distinct items the user never interacted with (in any role).
/// Small pools fall back from rejection sampling to an explicit partial
/// shuffle so the call always terminates.
fn draw_negatives(
    user: u32,
    observed: &HashSet<u32>,
    item_count: usize,
    n_neg: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>, DataError> {
    let pool = item_count - observed.len();
    if pool < n_neg {
        return Err(DataError::NotEnoughNegatives { user: user as usize, have: pool, need: n_neg });
    }
    if pool <= 4 * n_neg {
        // enumerate the pool, Fisher-Yates the first n_neg positions
        let mut unobserved: Vec<u32> =
            (0..item_count as u32).filter(|i| !observed.contains(i)).collect();
        for k in 0..n_neg {
            let j = rng.random_range(k..unobserved.len());
            unobserved.swap(k, j);
        }
        unobserved.truncate(n_neg);
        Ok(unobserved)
    } else {
        let mut chosen = HashSet::with_capacity(n_neg);
        let mut out = Vec::with_capacity(n_neg);
        while out.len() < n_neg {
            let i = rng.random_range(0..item_count as u32);
            if !observed.contains(&i) && chosen.insert(i) {
                out.push(i);
            }
        }
        Ok(out)
    }
}

/// Build frozen candidates for every valid and test holdout. Negatives
/// exclude the user's full observed history (train ∪ valid ∪ test); each
/// (role, user) pair gets its own derived seed stream so the result does not
/// depend on construction order.
pub fn build_candidates(
    train: &InteractionSet,
    valid: &InteractionSet,
    test: &InteractionSet,
    n_neg: usize,
    seed: u64,
) -> Result<EvalCandidates, DataError> {
    let item_count = train.item_count();
    let mut out = EvalCandidates {
        seed,
        n_neg,
        user_count: train.user_count(),
        item_count,
        valid: Vec::new(),
        test: Vec::new(),
    };
    for (role_idx, (role_set, bucket)) in
        [(valid, &mut out.valid), (test, &mut out.test)].into_iter().enumerate()
    {
        for u in role_set.active_users() {
            let observed: HashSet<u32> = train
                .row(u)
                .iter()
                .chain(valid.row(u))
                .chain(test.row(u))
                .copied()
                .collect();
            let stream = ((role_idx as u64) << 32) | u as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
            for &positive in role_set.row(u) {
                let negatives = draw_negatives(u, &observed, item_count, n_neg, &mut rng)?;
                bucket.push(CandidateEntry { user: u, positive, negatives });
            }
        }
    }
    Ok(out)
}

const FILE_MAGIC: &str = "uibrec-candidates v1";

impl EvalCandidates {
    /// Versioned plain-text format: a two-line header carrying the seed and
    /// shape, then one row per ranking instance. Byte-stable given identical
    /// inputs, so file checksums certify "same candidates".
    pub fn save_to(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        (|| -> std::io::Result<()> {
            writeln!(w, "{FILE_MAGIC}")?;
            writeln!(
                w,
                "seed={} n_neg={} users={} items={}",
                self.seed, self.n_neg, self.user_count, self.item_count
            )?;
            for (role, entries) in
                [(HoldoutRole::Valid, &self.valid), (HoldoutRole::Test, &self.test)]
            {
                for e in entries {
                    write!(w, "{} {} {}", role.tag(), e.user, e.positive)?;
                    for n in &e.negatives {
                        write!(w, " {n}")?;
                    }
                    writeln!(w)?;
                }
            }
            w.flush()
        })()
        .map_err(|e| DataError::io(path, e))
    }

    pub fn load_from(path: &Path) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::BadCandidates { path: path.into(), msg };
        let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let magic = lines
            .next()
            .transpose()
            .map_err(|e| DataError::io(path, e))?
            .ok_or_else(|| bad("empty file".into()))?;
        if magic != FILE_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected {FILE_MAGIC:?}")));
        }
        let header = lines
            .next()
            .transpose()
            .map_err(|e| DataError::io(path, e))?
            .ok_or_else(|| bad("missing header".into()))?;
        let mut seed = None;
        let mut n_neg = None;
        let mut users = None;
        let mut items = None;
        for kv in header.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad header {kv:?}")))?;
            let v: u64 = v.parse().map_err(|_| bad(format!("bad header value {kv:?}")))?;
            match k {
                "seed" => seed = Some(v),
                "n_neg" => n_neg = Some(v as usize),
                "users" => users = Some(v as usize),
                "items" => items = Some(v as usize),
                _ => return Err(bad(format!("unknown header key {k:?}"))),
            }
        }
        let (seed, n_neg, user_count, item_count) = match (seed, n_neg, users, items) {
            (Some(s), Some(n), Some(u), Some(i)) => (s, n, u, i),
            _ => return Err(bad("incomplete header".into())),
        };
        let mut out = EvalCandidates {
            seed,
            n_neg,
            user_count,
            item_count,
            valid: Vec::new(),
            test: Vec::new(),
        };
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 3;
            let line = line.map_err(|e| DataError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let role = fields.next().ok_or_else(|| bad(format!("line {lineno}: empty row")))?;
            let mut next_u32 = |name: &str| -> Result<u32, DataError> {
                fields
                    .next()
                    .ok_or_else(|| bad(format!("line {lineno}: missing {name}")))?
                    .parse()
                    .map_err(|_| bad(format!("line {lineno}: bad {name}")))
            };
            let user = next_u32("user")?;
            let positive = next_u32("positive")?;
            let negatives: Vec<u32> = fields
                .map(|s| s.parse().map_err(|_| bad(format!("line {lineno}: bad negative"))))
                .collect::<Result<_, _>>()?;
            if negatives.len() != n_neg {
                return Err(bad(format!(
                    "line {lineno}: {} negatives, expected {n_neg}",
                    negatives.len()
                )));
            }
            let entry = CandidateEntry { user, positive, negatives };
            match role {
                "valid" => out.valid.push(entry),
                "test" => out.test.push(entry),
                other => return Err(bad(format!("line {lineno}: unknown role {other:?}"))),
            }
        }
        Ok(out)
    }
}
