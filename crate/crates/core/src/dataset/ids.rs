//! Raw-id ↔ dense-index interning. Dense indices are assigned in first-seen
//! order so that ingestion is a pure function of the input bytes.

use crate::error::DataError;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Bidirectional map between raw string ids and dense `u32` indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    to_dense: HashMap<String, u32>,
    to_raw: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Return the dense index for `raw`, assigning the next free index on
    /// first sight.
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&d) = self.to_dense.get(raw) {
            return d;
        }
        let d = u32::try_from(self.to_raw.len()).expect("id space exceeds u32");
        self.to_dense.insert(raw.to_owned(), d);
        self.to_raw.push(raw.to_owned());
        d
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.to_dense.get(raw).copied()
    }

    pub fn raw(&self, dense: u32) -> &str {
        &self.to_raw[dense as usize]
    }

    pub fn len(&self) -> usize {
        self.to_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_raw.is_empty()
    }

    /// Write one raw id per line, in dense order. Raw ids in the supported
    /// datasets never contain newlines, which load() re-checks implicitly.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for raw in &self.to_raw {
            writeln!(w, "{raw}")?;
        }
        Ok(())
    }

    pub fn save_to(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        self.save(std::io::BufWriter::new(f)).map_err(|e| DataError::io(path, e))
    }

    pub fn load_from(path: &Path) -> Result<Self, DataError> {
        let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut map = IdMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| DataError::io(path, e))?;
            let before = map.len();
            map.intern(&line);
            if map.len() == before {
                return Err(DataError::malformed(path, i + 1, format!("duplicate id {line:?}")));
            }
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_first_seen_and_contiguous() {
        let mut m = IdMap::new();
        assert_eq!(m.intern("b"), 0);
        assert_eq!(m.intern("a"), 1);
        assert_eq!(m.intern("b"), 0);
        assert_eq!(m.len(), 2);
        assert_eq!(m.raw(1), "a");
    }

    #[test]
    fn save_load_round_trips() {
        let mut m = IdMap::new();
        for raw in ["42", "7", "user_x"] {
            m.intern(raw);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.txt");
        m.save_to(&path).unwrap();
        let back = IdMap::load_from(&path).unwrap();
        assert_eq!(m, back);
    }
}
