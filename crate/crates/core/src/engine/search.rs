use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ExecState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchStrategy {
    Dfs,
    Bfs,
    Random { seed: u64 },
}

impl SearchStrategy {
    /// Same strategy with a different random seed; dfs/bfs are unchanged.
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            SearchStrategy::Random { .. } => SearchStrategy::Random { seed },
            s => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SearchStrategy::Dfs => "dfs",
            SearchStrategy::Bfs => "bfs",
            SearchStrategy::Random { .. } => "rand",
        }
    }
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchStrategy::Random { seed } => write!(f, "rand:{seed}"),
            s => f.write_str(s.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown search strategy '{0}' (expected dfs, bfs or rand)")]
pub struct UnknownStrategy(pub String);

impl FromStr for SearchStrategy {
    type Err = UnknownStrategy;

    /// `dfs`, `bfs`, `rand`/`random`, optionally `rand:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, seed) = match s.split_once(':') {
            Some((n, seed)) => (
                n,
                seed.parse::<u64>()
                    .map_err(|_| UnknownStrategy(s.to_string()))?,
            ),
            None => (s, 0),
        };
        match name {
            "dfs" => Ok(SearchStrategy::Dfs),
            "bfs" => Ok(SearchStrategy::Bfs),
            "rand" | "random" => Ok(SearchStrategy::Random { seed }),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

/// Picks the next active state to advance.
#[derive(Debug, Clone)]
pub struct Searcher {
    strategy: SearchStrategy,
    rng: Option<ChaCha8Rng>,
}

impl Searcher {
    pub fn new(strategy: SearchStrategy) -> Self {
        let rng = match strategy {
            SearchStrategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Searcher { strategy, rng }
    }

    pub fn strategy(&self) -> SearchStrategy {
        self.strategy
    }

    /// Index into `active` of the chosen state. dfs takes the deepest state
    /// (latest created on ties), bfs the shallowest (earliest created on
    /// ties), random a seeded uniform pick.
    pub fn select(&mut self, active: &[ExecState]) -> Option<usize> {
        if active.is_empty() {
            return None;
        }
        let key = |s: &ExecState| (s.depth(), s.id);
        Some(match (&mut self.rng, self.strategy) {
            (Some(rng), _) => rng.random_range(0..active.len()),
            (None, SearchStrategy::Bfs) => {
                let pick = active.iter().enumerate().min_by_key(|(_, s)| key(s));
                pick.map(|(i, _)| i).unwrap()
            }
            (None, _) => {
                let pick = active.iter().enumerate().max_by_key(|(_, s)| key(s));
                pick.map(|(i, _)| i).unwrap()
            }
        })
    }
}
