//! Readers for the three supported raw-log layouts. All ratings/weights are
//! implicitized (any value counts as an interaction), duplicate pairs are
//! collapsed to their first occurrence, and dense ids are assigned in
//! first-seen order over the surviving interactions.

use super::ids::IdMap;
use super::interactions::{InteractionSet, Role};
use crate::error::DataError;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Raw file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// `user::item::rating[::timestamp]`, the MovieLens ratings.dat layout.
    MovielensRatings,
    /// `user<TAB>artist[<TAB>weight]`, the LastFM user_artists layout.
    /// Falls back to whitespace splitting for convenience; a header line is
    /// tolerated.
    LastfmTsv,
    /// `user,item,rating[,timestamp]`, the Amazon review-rating CSV layout.
    /// A header line is tolerated.
    AmazonCsv,
}

impl Format {
    /// Whether ingestion applies iterative 5-core filtering by default.
    /// Only the Amazon reviews come unfiltered; MovieLens and the LastFM
    /// dump are used as distributed.
    pub fn default_five_core(self) -> bool {
        matches!(self, Format::AmazonCsv)
    }

    fn may_have_header(self) -> bool {
        matches!(self, Format::LastfmTsv | Format::AmazonCsv)
    }
}

impl FromStr for Format {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "movielens-ratings" => Ok(Format::MovielensRatings),
            "lastfm-tsv" => Ok(Format::LastfmTsv),
            "amazon-csv" => Ok(Format::AmazonCsv),
            other => Err(DataError::UnknownFormat(other.to_owned())),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::MovielensRatings => "movielens-ratings",
            Format::LastfmTsv => "lastfm-tsv",
            Format::AmazonCsv => "amazon-csv",
        })
    }
}

/// Ingestion result: the id maps plus the raw (unsplit) interaction set.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub users: IdMap,
    pub items: IdMap,
    pub interactions: InteractionSet,
    /// Interactions dropped by 5-core filtering (0 when disabled).
    pub core_filtered: usize,
}

/// One parsed record, still on raw string ids.
struct RawRecord {
    user: String,
    item: String,
    ts: Option<i64>,
}

fn parse_line(format: Format, line: &str) -> Result<RawRecord, String> {
    match format {
        Format::MovielensRatings => {
            let mut f = line.split("::");
            let user = f.next().filter(|s| !s.is_empty()).ok_or("missing user field")?;
            let item = f.next().filter(|s| !s.is_empty()).ok_or("missing item field")?;
            let rating = f.next().ok_or("missing rating field")?;
            rating.parse::<f64>().map_err(|_| format!("rating {rating:?} is not numeric"))?;
            let ts = match f.next() {
                Some(t) => {
                    Some(t.trim().parse::<i64>().map_err(|_| format!("bad timestamp {t:?}"))?)
                }
                None => None,
            };
            Ok(RawRecord { user: user.into(), item: item.into(), ts })
        }
        Format::LastfmTsv => {
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').collect()
            } else {
                line.split_whitespace().collect()
            };
            if fields.len() < 2 || fields.len() > 3 {
                return Err(format!("expected 2-3 fields, got {}", fields.len()));
            }
            if let Some(w) = fields.get(2) {
                w.trim().parse::<f64>().map_err(|_| format!("weight {w:?} is not numeric"))?;
            }
            Ok(RawRecord { user: fields[0].into(), item: fields[1].into(), ts: None })
        }
        Format::AmazonCsv => {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(format!("expected 3-4 fields, got {}", fields.len()));
            }
            let rating = fields[2].trim();
            rating.parse::<f64>().map_err(|_| format!("rating {rating:?} is not numeric"))?;
            let ts = match fields.get(3) {
                Some(t) => {
                    // float timestamps appear in some dumps; truncate
                    let t = t.trim();
                    Some(
                        t.parse::<i64>()
                            .or_else(|_| t.parse::<f64>().map(|x| x as i64))
                            .map_err(|_| format!("bad timestamp {t:?}"))?,
                    )
                }
                None => None,
            };
            Ok(RawRecord { user: fields[0].into(), item: fields[1].into(), ts })
        }
    }
}

/// Ingest with the format's default 5-core policy.
pub fn ingest(path: &Path, format: Format) -> Result<Ingested, DataError> {
    ingest_with(path, format, format.default_five_core())
}

/// Ingest with an explicit 5-core choice.
pub fn ingest_with(path: &Path, format: Format, five_core: bool) -> Result<Ingested, DataError> {
    let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    ingest_reader(BufReader::new(f), path.to_path_buf(), format, five_core)
}

/// Ingest from any buffered reader; `origin` only labels error messages.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    origin: PathBuf,
    format: Format,
    five_core: bool,
) -> Result<Ingested, DataError> {
    let mut records: Vec<RawRecord> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| DataError::io(&origin, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        match parse_line(format, trimmed) {
            Ok(rec) => {
                if seen.insert((rec.user.clone(), rec.item.clone())) {
                    records.push(rec);
                }
            }
            Err(msg) => {
                // a non-numeric weight column on line 1 is a header
                if lineno == 1 && format.may_have_header() {
                    continue;
                }
                return Err(DataError::malformed(&origin, lineno, msg));
            }
        }
    }

    let mut core_filtered = 0usize;
    if five_core {
        let before = records.len();
        records = five_core_filter(records);
        core_filtered = before - records.len();
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let all_ts = records.iter().all(|r| r.ts.is_some());
    let mut triples = Vec::with_capacity(records.len());
    for r in &records {
        let u = users.intern(&r.user);
        let i = items.intern(&r.item);
        triples.push((u, i, r.ts.unwrap_or(0)));
    }
    let interactions = if all_ts {
        InteractionSet::from_pairs_ts(Role::All, users.len(), items.len(), triples)
    } else {
        InteractionSet::from_pairs(
            Role::All,
            users.len(),
            items.len(),
            triples.into_iter().map(|(u, i, _)| (u, i)).collect(),
        )
    };
    Ok(Ingested { users, items, interactions, core_filtered })
}

/// Iteratively drop users and items with fewer than 5 interactions until
/// both constraints hold simultaneously.
fn five_core_filter(mut records: Vec<RawRecord>) -> Vec<RawRecord> {
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for r in &records {
            *user_deg.entry(r.user.as_str()).or_default() += 1;
            *item_deg.entry(r.item.as_str()).or_default() += 1;
        }
        let keep: Vec<bool> = records
            .iter()
            .map(|r| user_deg[r.user.as_str()] >= 5 && item_deg[r.item.as_str()] >= 5)
            .collect();
        if keep.iter().all(|&k| k) {
            return records;
        }
        let mut it = keep.iter();
        records.retain(|_| *it.next().unwrap());
    }
}
