use std::collections::HashMap;

use super::{PathCondition, SolveError, Verdict};

/// Memo of solver verdicts keyed by canonical constraint text.
#[derive(Debug, Default, Clone)]
pub struct QueryCache {
    entries: HashMap<String, Verdict>,
    hits: u64,
    misses: u64,
}

impl QueryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_solve<F>(&mut self, pc: &PathCondition, solve: F) -> Result<Verdict, SolveError>
    where
        F: FnOnce() -> Result<Verdict, SolveError>,
    {
        let key = pc.canonical_key();
        if let Some(v) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(v.clone());
        }
        self.misses += 1;
        let v = solve()?;
        self.entries.insert(key, v.clone());
        Ok(v)
    }
}
