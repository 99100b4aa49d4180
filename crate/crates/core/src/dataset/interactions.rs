//! The central interaction store and the leave-one-out split.

use crate::error::DataError;
use crate::exec::derive_seed;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Which slice of the protocol an [`InteractionSet`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Raw ingested data, not yet split.
    All,
    Train,
    Valid,
    Test,
}

/// Sparse user → item store in CSR layout. Per-user item lists are sorted,
/// duplicate-free and immutable after construction; optional per-interaction
/// timestamps ride along in the same order (only raw ingests carry them —
/// they exist so the split can hold out the newest interactions).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    role: Role,
    user_count: usize,
    item_count: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
    timestamps: Option<Vec<i64>>,
}

impl InteractionSet {
    /// Build from (user, item) pairs. Pairs are sorted internally; duplicates
    /// are a caller bug and panic.
    pub fn from_pairs(
        role: Role,
        user_count: usize,
        item_count: usize,
        pairs: Vec<(u32, u32)>,
    ) -> Self {
        let triples = pairs.into_iter().map(|(u, i)| (u, i, 0i64)).collect();
        Self::build(role, user_count, item_count, triples, false)
    }

    /// Same as [`from_pairs`](Self::from_pairs) but keeping a timestamp per
    /// interaction.
    pub fn from_pairs_ts(
        role: Role,
        user_count: usize,
        item_count: usize,
        triples: Vec<(u32, u32, i64)>,
    ) -> Self {
        Self::build(role, user_count, item_count, triples, true)
    }

    fn build(
        role: Role,
        user_count: usize,
        item_count: usize,
        mut triples: Vec<(u32, u32, i64)>,
        keep_ts: bool,
    ) -> Self {
        triples.sort_unstable_by_key(|&(u, i, _)| (u, i));
        for w in triples.windows(2) {
            assert!(
                (w[0].0, w[0].1) != (w[1].0, w[1].1),
                "duplicate pair ({}, {})",
                w[0].0,
                w[0].1
            );
        }
        let mut offsets = vec![0usize; user_count + 1];
        for &(u, _, _) in &triples {
            assert!((u as usize) < user_count, "user {u} out of range");
            offsets[u as usize + 1] += 1;
        }
        for u in 0..user_count {
            offsets[u + 1] += offsets[u];
        }
        let mut items = Vec::with_capacity(triples.len());
        let mut timestamps = keep_ts.then(|| Vec::with_capacity(triples.len()));
        for &(_, i, t) in &triples {
            assert!((i as usize) < item_count, "item {i} out of range");
            items.push(i);
            if let Some(ts) = timestamps.as_mut() {
                ts.push(t);
            }
        }
        InteractionSet { role, user_count, item_count, offsets, items, timestamps }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    /// Total number of interactions.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorted item list of one user.
    pub fn row(&self, user: u32) -> &[u32] {
        &self.items[self.offsets[user as usize]..self.offsets[user as usize + 1]]
    }

    /// Timestamps aligned with [`row`](Self::row), when ingested.
    pub fn row_ts(&self, user: u32) -> Option<&[i64]> {
        let ts = self.timestamps.as_ref()?;
        Some(&ts[self.offsets[user as usize]..self.offsets[user as usize + 1]])
    }

    pub fn has_timestamps(&self) -> bool {
        self.timestamps.is_some()
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.row(user).binary_search(&item).is_ok()
    }

    /// All (user, item) pairs in (user, item) order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.user_count as u32).flat_map(move |u| self.row(u).iter().map(move |&i| (u, i)))
    }

    /// The (user, item) pair at flat index `idx` (0..len), counting in
    /// (user, item) order. Used by the uniform positive sampler.
    pub fn pair_at(&self, idx: usize) -> (u32, u32) {
        debug_assert!(idx < self.len());
        // offsets is sorted; partition_point finds the owning user
        let u = self.offsets.partition_point(|&o| o <= idx) - 1;
        (u as u32, self.items[idx])
    }

    /// Users with at least one interaction in this set.
    pub fn active_users(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.user_count as u32).filter(move |&u| !self.row(u).is_empty())
    }
}

const SET_MAGIC: &str = "uibrec-interactions v1";

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::All => "all",
        Role::Train => "train",
        Role::Valid => "valid",
        Role::Test => "test",
    }
}

impl InteractionSet {
    /// Versioned plain-text format: a two-line header, then one `user item
    /// [timestamp]` row per interaction in (user, item) order. Byte-stable
    /// given equal content, so file checksums certify "same split".
    pub fn save_to(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        (|| -> std::io::Result<()> {
            writeln!(w, "{SET_MAGIC}")?;
            writeln!(
                w,
                "role={} users={} items={} timestamps={}",
                role_tag(self.role),
                self.user_count,
                self.item_count,
                u8::from(self.timestamps.is_some()),
            )?;
            for u in 0..self.user_count as u32 {
                match self.row_ts(u) {
                    Some(ts) => {
                        for (&i, &t) in self.row(u).iter().zip(ts) {
                            writeln!(w, "{u} {i} {t}")?;
                        }
                    }
                    None => {
                        for &i in self.row(u) {
                            writeln!(w, "{u} {i}")?;
                        }
                    }
                }
            }
            w.flush()
        })()
        .map_err(|e| DataError::io(path, e))
    }

    pub fn load_from(path: &Path) -> Result<Self, DataError> {
        let bad = |line: usize, msg: String| DataError::malformed(path, line, msg);
        let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let magic = lines
            .next()
            .transpose()
            .map_err(|e| DataError::io(path, e))?
            .ok_or_else(|| bad(1, "empty file".into()))?;
        if magic != SET_MAGIC {
            return Err(bad(1, format!("bad magic {magic:?}, expected {SET_MAGIC:?}")));
        }
        let header = lines
            .next()
            .transpose()
            .map_err(|e| DataError::io(path, e))?
            .ok_or_else(|| bad(2, "missing header".into()))?;
        let mut role = None;
        let mut users = None;
        let mut items = None;
        let mut with_ts = None;
        for kv in header.split_whitespace() {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| bad(2, format!("bad header field {kv:?}")))?;
            match k {
                "role" => {
                    role = Some(match v {
                        "all" => Role::All,
                        "train" => Role::Train,
                        "valid" => Role::Valid,
                        "test" => Role::Test,
                        other => return Err(bad(2, format!("unknown role {other:?}"))),
                    })
                }
                "users" => {
                    users =
                        Some(v.parse().map_err(|_| bad(2, format!("bad user count {v:?}")))?)
                }
                "items" => {
                    items =
                        Some(v.parse().map_err(|_| bad(2, format!("bad item count {v:?}")))?)
                }
                "timestamps" => {
                    with_ts = Some(match v {
                        "0" => false,
                        "1" => true,
                        other => return Err(bad(2, format!("bad timestamps flag {other:?}"))),
                    })
                }
                other => return Err(bad(2, format!("unknown header key {other:?}"))),
            }
        }
        let (role, user_count, item_count, with_ts) = match (role, users, items, with_ts) {
            (Some(r), Some(u), Some(i), Some(t)) => (r, u, i, t),
            _ => return Err(bad(2, "incomplete header".into())),
        };
        let want_fields = if with_ts { 3 } else { 2 };
        let mut triples: Vec<(u32, u32, i64)> = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 3;
            let line = line.map_err(|e| DataError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != want_fields {
                return Err(bad(
                    lineno,
                    format!("expected {want_fields} fields, got {}", fields.len()),
                ));
            }
            let user: u32 =
                fields[0].parse().map_err(|_| bad(lineno, format!("bad user {:?}", fields[0])))?;
            let item: u32 =
                fields[1].parse().map_err(|_| bad(lineno, format!("bad item {:?}", fields[1])))?;
            let ts: i64 = match fields.get(2) {
                Some(t) => t.parse().map_err(|_| bad(lineno, format!("bad timestamp {t:?}")))?,
                None => 0,
            };
            if user as usize >= user_count {
                return Err(bad(lineno, format!("user {user} out of range (< {user_count})")));
            }
            if item as usize >= item_count {
                return Err(bad(lineno, format!("item {item} out of range (< {item_count})")));
            }
            if triples.last().is_some_and(|&(pu, pi, _)| (pu, pi) >= (user, item)) {
                return Err(bad(
                    lineno,
                    "rows out of (user, item) order or duplicated".into(),
                ));
            }
            triples.push((user, item, ts));
        }
        Ok(if with_ts {
            Self::from_pairs_ts(role, user_count, item_count, triples)
        } else {
            Self::from_pairs(
                role,
                user_count,
                item_count,
                triples.into_iter().map(|(u, i, _)| (u, i)).collect(),
            )
        })
    }
}

/// Split statistics, serialized into the prepare manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitSummary {
    pub seed: u64,
    pub users_total: usize,
    pub users_kept: usize,
    /// Users with fewer than 3 interactions, excluded from all three roles.
    pub users_excluded: usize,
    pub interactions_excluded: usize,
    pub train_interactions: usize,
    pub valid_interactions: usize,
    pub test_interactions: usize,
    /// Whether holdouts were picked by recency (true) or seed-random (false).
    pub by_timestamp: bool,
}

/// Result of [`split_leave_one_out`].
#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
    pub summary: SplitSummary,
}

/// Leave-one-out split: per user one item goes to test, one to valid, the
/// rest to train. With timestamps the newest interaction is tested and the
/// second newest validated (ties broken by item id); without them the two
/// holdouts are drawn from a per-user ChaCha8 stream, so the split is a pure
/// function of (data, seed) and independent of user iteration order.
///
/// Users with fewer than 3 interactions cannot supply both holdouts and a
/// training residue; they are excluded from all three roles (their rows stay
/// in the id space but come back empty) and counted in the summary.
pub fn split_leave_one_out(data: &InteractionSet, seed: u64) -> Split {
    let by_timestamp = data.has_timestamps();
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut users_kept = 0usize;
    let mut users_excluded = 0usize;
    let mut interactions_excluded = 0usize;

    for u in 0..data.user_count() as u32 {
        let row = data.row(u);
        if row.is_empty() {
            continue;
        }
        if row.len() < 3 {
            users_excluded += 1;
            interactions_excluded += row.len();
            continue;
        }
        users_kept += 1;
        let (test_idx, valid_idx) = if by_timestamp {
            let ts = data.row_ts(u).expect("timestamps present");
            // order row positions by (timestamp, item id); last = newest
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_unstable_by_key(|&p| (ts[p], row[p]));
            (order[row.len() - 1], order[row.len() - 2])
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u as u64));
            let positions: Vec<usize> = (0..row.len()).collect();
            let picks = positions.choose_multiple_array::<_, 2>(&mut rng).expect("row len >= 3");
            (picks[0], picks[1])
        };
        for (p, &item) in row.iter().enumerate() {
            if p == test_idx {
                test.push((u, item));
            } else if p == valid_idx {
                valid.push((u, item));
            } else {
                train.push((u, item));
            }
        }
    }

    let (uc, ic) = (data.user_count(), data.item_count());
    let summary = SplitSummary {
        seed,
        users_total: data.active_users().count(),
        users_kept,
        users_excluded,
        interactions_excluded,
        train_interactions: train.len(),
        valid_interactions: valid.len(),
        test_interactions: test.len(),
        by_timestamp,
    };
    Split {
        train: InteractionSet::from_pairs(Role::Train, uc, ic, train),
        valid: InteractionSet::from_pairs(Role::Valid, uc, ic, valid),
        test: InteractionSet::from_pairs(Role::Test, uc, ic, test),
        summary,
    }
}
