//! Exact nearest-neighbor search and stable-neighbor selection.
//!
//! Neighbors are found by a full cosine scan over the vocabulary. The scan
//! is split across rayon workers; each worker keeps a bounded top-k heap and
//! the partial heaps are merged under a total order (cosine descending, then
//! frequency rank ascending), so the result does not depend on how the work
//! was split.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model_io::{EmbeddingModel, ModelError};
use crate::vector_ops;

/// Bounds on rows per rayon task in the neighbor scan.
const MIN_CHUNK: usize = 16;
const MAX_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("neighbors must be at least 2, got {0}")]
    TooFewNeighbors(usize),
    #[error("neighbors ({n_neighbors}) must not exceed scope ({scope})")]
    ScopeTooSmall { n_neighbors: usize, scope: usize },
    #[error("limit ({limit}) must be at least neighbors + 1 ({min})")]
    LimitTooSmall { limit: usize, min: usize },
    #[error("sigma multiplier must be finite and non-negative")]
    BadSigma,
}

/// Parameters of the neighbor search and the outlier test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Neighbors per word used for the surrounding uniformity.
    pub n_neighbors: usize,
    /// Number of most frequent words treated as stable.
    pub limit: usize,
    /// How many overall nearest words are inspected when collecting stable
    /// neighbors.
    pub scope: usize,
    /// Multiplier `k` of the `m - k·σ` threshold.
    pub sigma_k: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_neighbors: 4,
            limit: 1000,
            scope: 40,
            sigma_k: 3.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_neighbors < 2 {
            return Err(ConfigError::TooFewNeighbors(self.n_neighbors));
        }
        if self.n_neighbors > self.scope {
            return Err(ConfigError::ScopeTooSmall {
                n_neighbors: self.n_neighbors,
                scope: self.scope,
            });
        }
        if self.limit < self.n_neighbors + 1 {
            return Err(ConfigError::LimitTooSmall {
                limit: self.limit,
                min: self.n_neighbors + 1,
            });
        }
        if !(self.sigma_k.is_finite() && self.sigma_k >= 0.0) {
            return Err(ConfigError::BadSigma);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub token: String,
    pub rank: usize,
    pub cosine: f64,
}

/// The stable neighbors of a word, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborList {
    pub query: String,
    pub neighbors: Vec<Neighbor>,
}

/// Why no neighbor list could be formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Insufficient {
    QueryNotStable,
    TooFewInScope { found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StableNeighbors {
    Found(NeighborList),
    Insufficient(Insufficient),
}

/// Scan candidate. `Ord` ranks better candidates higher: larger cosine,
/// then smaller rank. Ranks are unique, so this is a total order.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    cosine: f64,
    rank: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cosine
            .total_cmp(&other.cosine)
            .then_with(|| other.rank.cmp(&self.rank))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Min-heap holding the best `k` candidates seen so far.
struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Candidate>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(c));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if c > *worst {
                self.heap.pop();
                self.heap.push(Reverse(c));
            }
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for Reverse(c) in other.heap {
            self.offer(c);
        }
        self
    }

    fn into_sorted(self) -> Vec<Candidate> {
        let mut v: Vec<Candidate> = self.heap.into_iter().map(|Reverse(c)| c).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

fn lookup(model: &EmbeddingModel, token: &str) -> Result<usize, SearchError> {
    model
        .rank_of(token)
        .ok_or_else(|| SearchError::UnknownToken(token.to_owned()))
}

/// Top `k` (rank, cosine) pairs for the word at `query_rank`, excluding the
/// word itself.
pub(crate) fn nearest_ranks(model: &EmbeddingModel, query_rank: usize, k: usize) -> Vec<(usize, f64)> {
    let k = k.min(model.vocab_size() - 1);
    if k == 0 {
        return Vec::new();
    }
    let q = model.vector(query_rank);
    let q_norm = model.norm(query_rank);
    let n = model.vocab_size();
    let chunk = n.div_ceil(rayon::current_num_threads() * 4).clamp(MIN_CHUNK, MAX_CHUNK);

    (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut top = TopK::new(k);
            for rank in c * chunk..((c + 1) * chunk).min(n) {
                if rank == query_rank {
                    continue;
                }
                let dot = vector_ops::dot(q, model.vector(rank));
                let cosine = vector_ops::cosine_from_parts(dot, q_norm, model.norm(rank));
                top.offer(Candidate { cosine, rank });
            }
            top
        })
        .reduce(|| TopK::new(k), TopK::merge)
        .into_sorted()
        .into_iter()
        .map(|c| (c.rank, c.cosine))
        .collect()
}

fn to_neighbors(model: &EmbeddingModel, ranked: impl IntoIterator<Item = (usize, f64)>) -> Vec<Neighbor> {
    ranked
        .into_iter()
        .map(|(rank, cosine)| Neighbor {
            token: model.token(rank).to_owned(),
            rank,
            cosine,
        })
        .collect()
}

/// The `k` words most similar to `query` over the whole vocabulary.
pub fn all_neighbors(model: &EmbeddingModel, query: &str, k: usize) -> Result<Vec<Neighbor>, SearchError> {
    let rank = lookup(model, query)?;
    Ok(to_neighbors(model, nearest_ranks(model, rank, k)))
}

/// Stable-neighbor selection for the word at `query_rank`. Assumes `cfg`
/// has been validated against the model.
pub(crate) fn stable_neighbor_ranks(
    model: &EmbeddingModel,
    query_rank: usize,
    cfg: &SearchConfig,
) -> Result<Vec<(usize, f64)>, Insufficient> {
    if query_rank >= cfg.limit {
        return Err(Insufficient::QueryNotStable);
    }
    let stable: Vec<(usize, f64)> = nearest_ranks(model, query_rank, cfg.scope)
        .into_iter()
        .filter(|&(rank, _)| rank < cfg.limit)
        .take(cfg.n_neighbors)
        .collect();
    if stable.len() < cfg.n_neighbors {
        return Err(Insufficient::TooFewInScope { found: stable.len() });
    }
    Ok(stable)
}

pub(crate) fn check_config(model: &EmbeddingModel, cfg: &SearchConfig) -> Result<(), SearchError> {
    cfg.validate()?;
    model.stable_set(cfg.limit)?;
    Ok(())
}

/// The first `cfg.n_neighbors` stable words among the `cfg.scope` nearest
/// words of `query`.
pub fn stable_neighbors(
    model: &EmbeddingModel,
    query: &str,
    cfg: &SearchConfig,
) -> Result<StableNeighbors, SearchError> {
    check_config(model, cfg)?;
    let rank = lookup(model, query)?;
    Ok(match stable_neighbor_ranks(model, rank, cfg) {
        Ok(ranked) => StableNeighbors::Found(NeighborList {
            query: query.to_owned(),
            neighbors: to_neighbors(model, ranked),
        }),
        Err(why) => StableNeighbors::Insufficient(why),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(entries: &[(&str, &[f64])]) -> EmbeddingModel {
        EmbeddingModel::from_entries(entries[0].1.len(), entries.iter().map(|(t, v)| (*t, v.to_vec()))).unwrap()
    }

    fn tokens(ns: &[Neighbor]) -> Vec<&str> {
        ns.iter().map(|n| n.token.as_str()).collect()
    }

    #[test]
    fn three_word_scan() {
        let m = model(&[("a", &[1.0, 0.0]), ("b", &[0.9, 0.1]), ("c", &[0.0, 1.0])]);
        let ns = all_neighbors(&m, "a", 2).unwrap();
        assert_eq!(tokens(&ns), ["b", "c"]);
        assert_eq!(ns[1].cosine, 0.0);
        // k beyond the vocabulary returns everything else.
        assert_eq!(tokens(&all_neighbors(&m, "c", 10).unwrap()), ["b", "a"]);
        assert!(matches!(all_neighbors(&m, "zz", 1), Err(SearchError::UnknownToken(_))));
    }

    #[test]
    fn ties_go_to_the_more_frequent_word() {
        let m = model(&[
            ("q", &[1.0, 0.0]),
            ("x", &[0.0, 1.0]),
            ("y", &[0.0, -1.0]),
            ("z", &[0.0, 2.0]),
        ]);
        let ns = all_neighbors(&m, "q", 3).unwrap();
        assert_eq!(tokens(&ns), ["x", "y", "z"]);
    }

    #[test]
    fn query_outside_stable_set() {
        let m = model(&[
            ("a", &[1.0, 0.0]),
            ("b", &[0.9, 0.1]),
            ("c", &[0.8, 0.2]),
            ("d", &[0.7, 0.3]),
        ]);
        let cfg = SearchConfig {
            n_neighbors: 2,
            limit: 3,
            scope: 3,
            sigma_k: 3.0,
        };
        assert_eq!(
            stable_neighbors(&m, "d", &cfg).unwrap(),
            StableNeighbors::Insufficient(Insufficient::QueryNotStable)
        );
        match stable_neighbors(&m, "a", &cfg).unwrap() {
            StableNeighbors::Found(list) => assert_eq!(tokens(&list.neighbors), ["b", "c"]),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn scope_with_seven_stable_words_keeps_top_four() {
        // Query plus 7 stable words in scope and 2 unstable ones interleaved.
        let angles = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45];
        let names = ["q", "s1", "u1", "s2", "s3", "u2", "s4", "s5", "s6", "s7"];
        let mut entries: Vec<(String, Vec<f64>)> = names
            .iter()
            .zip(angles)
            .map(|(n, a)| (n.to_string(), vec![f64::cos(a), f64::sin(a)]))
            .collect();
        // Stable words first in rank order.
        entries.sort_by_key(|(n, _)| n.starts_with('u'));
        let m = EmbeddingModel::from_entries(2, entries).unwrap();
        let cfg = SearchConfig {
            n_neighbors: 4,
            limit: 8,
            scope: 9,
            sigma_k: 3.0,
        };
        match stable_neighbors(&m, "q", &cfg).unwrap() {
            StableNeighbors::Found(list) => {
                assert_eq!(tokens(&list.neighbors), ["s1", "s2", "s3", "s4"])
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn too_few_stable_words_in_scope() {
        // Stable: q, s1, s2, far1, far2. Unstable words crowd the scope.
        let m = model(&[
            ("q", &[1.0, 0.0, 0.0]),
            ("s1", &[0.99, 0.1, 0.0]),
            ("s2", &[0.98, 0.0, 0.2]),
            ("far1", &[-1.0, 0.1, 0.0]),
            ("far2", &[-1.0, 0.0, 0.1]),
            ("u1", &[0.999, 0.05, 0.0]),
            ("u2", &[0.999, 0.0, 0.05]),
            ("u3", &[0.995, 0.05, 0.05]),
        ]);
        let cfg = SearchConfig {
            n_neighbors: 4,
            limit: 5,
            scope: 5,
            sigma_k: 3.0,
        };
        assert_eq!(
            stable_neighbors(&m, "q", &cfg).unwrap(),
            StableNeighbors::Insufficient(Insufficient::TooFewInScope { found: 2 })
        );
    }

    #[test]
    fn invalid_configs() {
        let m = model(&[("a", &[1.0]), ("b", &[2.0]), ("c", &[3.0])]);
        let mut cfg = SearchConfig {
            n_neighbors: 2,
            limit: 3,
            scope: 2,
            sigma_k: 3.0,
        };
        assert!(stable_neighbors(&m, "a", &cfg).is_ok());
        cfg.limit = 4;
        assert!(matches!(stable_neighbors(&m, "a", &cfg), Err(SearchError::Model(_))));
        cfg.limit = 2;
        assert!(matches!(
            stable_neighbors(&m, "a", &cfg),
            Err(SearchError::Config(ConfigError::LimitTooSmall { .. }))
        ));
        assert_eq!(
            SearchConfig {
                n_neighbors: 1,
                ..Default::default()
            }
            .validate(),
            Err(ConfigError::TooFewNeighbors(1))
        );
        assert!(matches!(
            SearchConfig {
                scope: 3,
                ..Default::default()
            }
            .validate(),
            Err(ConfigError::ScopeTooSmall { .. })
        ));
        assert_eq!(
            SearchConfig {
                sigma_k: f64::NAN,
                ..Default::default()
            }
            .validate(),
            Err(ConfigError::BadSigma)
        );
        assert!(SearchConfig::default().validate().is_ok());
    }
}
