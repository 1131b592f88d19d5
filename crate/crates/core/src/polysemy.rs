//! Surrounding uniformity and the outlier test for polysemy.
//!
//! The surrounding uniformity (SU) of a stable word `w` with stable
//! neighbors `a_1..a_N` is the uniformity of the set `{w, a_1, .., a_N}`:
//!
//! ```text
//! SU(w) = |w + Σ a_i| / (|w| + Σ |a_i|)
//! ```
//!
//! The test for `w` computes `SU(a_i)` for every neighbor (each with its own
//! neighbor search, which may include `w`), takes their mean `m` and sample
//! standard deviation `σ`, and reports `w` as polysemic when
//! `SU(w) < m - k·σ`. The test is not performed when any SU involved is
//! undefined or when `σ == 0`.

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::model_io::EmbeddingModel;
use crate::neighborhood::{self, Insufficient, Neighbor, SearchConfig, SearchError};
use crate::vector_ops::{self, Uniformity, UniformityValue};

/// Why a word has no SU value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UndefinedReason {
    QueryNotStable,
    InsufficientNeighbors { found: usize },
    Degenerate,
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UndefinedReason::QueryNotStable => f.write_str("query-not-stable"),
            UndefinedReason::InsufficientNeighbors { found } => {
                write!(f, "insufficient-neighbors (found {})", found)
            }
            UndefinedReason::Degenerate => f.write_str("degenerate"),
        }
    }
}

impl Serialize for UndefinedReason {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl From<Insufficient> for UndefinedReason {
    fn from(i: Insufficient) -> Self {
        match i {
            Insufficient::QueryNotStable => UndefinedReason::QueryNotStable,
            Insufficient::TooFewInScope { found } => UndefinedReason::InsufficientNeighbors { found },
        }
    }
}

/// A word's SU, or the reason it has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Su {
    Defined(UniformityValue),
    Undefined(UndefinedReason),
}

impl Su {
    pub fn value(&self) -> Option<f64> {
        match self {
            Su::Defined(v) => Some(v.get()),
            Su::Undefined(_) => None,
        }
    }
}

impl Serialize for Su {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Su::Defined(v) => s.serialize_f64(v.get()),
            Su::Undefined(_) => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityRecord {
    pub word: String,
    pub rank: usize,
    /// Empty unless a full neighbor list was found.
    pub neighbors: Vec<Neighbor>,
    pub su: Su,
}

/// Mean, sample standard deviation and threshold over neighbor SUs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestStatistics {
    pub neighbor_sus: Vec<f64>,
    pub mean: f64,
    /// Bessel-corrected sample standard deviation.
    pub sigma: f64,
    /// `mean - sigma_k * sigma`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UntestableReason {
    UndefinedSuSelf(UndefinedReason),
    UndefinedSuNeighbor { neighbor: String, reason: UndefinedReason },
    ZeroVariance,
}

impl fmt::Display for UntestableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UntestableReason::UndefinedSuSelf(r) => write!(f, "undefined-su-self ({})", r),
            UntestableReason::UndefinedSuNeighbor { neighbor, reason } => {
                write!(f, "undefined-su-neighbor ({}: {})", neighbor, reason)
            }
            UntestableReason::ZeroVariance => f.write_str("zero-variance"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Polysemic,
    NotDetected,
    Untestable(UntestableReason),
}

impl Verdict {
    /// Short partition label: `poly`, `mono` or `untestable`.
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Polysemic => "poly",
            Verdict::NotDetected => "mono",
            Verdict::Untestable(_) => "untestable",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Polysemic => f.write_str("polysemic"),
            Verdict::NotDetected => f.write_str("not-detected"),
            Verdict::Untestable(r) => write!(f, "untestable: {}", r),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at least 2 values are needed, got {0}")]
pub struct TooFewValues(pub usize);

/// Mean and Bessel-corrected standard deviation (Welford's update), and the
/// threshold `mean - sigma_k * sigma`.
pub fn outlier_stats(neighbor_sus: &[f64], sigma_k: f64) -> Result<TestStatistics, TooFewValues> {
    if neighbor_sus.len() < 2 {
        return Err(TooFewValues(neighbor_sus.len()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in neighbor_sus.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let sigma = (m2.max(0.0) / (neighbor_sus.len() - 1) as f64).sqrt();
    Ok(TestStatistics {
        neighbor_sus: neighbor_sus.to_vec(),
        mean,
        sigma,
        threshold: mean - sigma_k * sigma,
    })
}

/// The decision step: untestable on zero dispersion, otherwise polysemic iff
/// `su` is strictly below the threshold.
pub fn judge(su: f64, stats: &TestStatistics) -> Verdict {
    if stats.sigma == 0.0 {
        Verdict::Untestable(UntestableReason::ZeroVariance)
    } else if su < stats.threshold {
        Verdict::Polysemic
    } else {
        Verdict::NotDetected
    }
}

/// Full result of testing one word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolysemyTest {
    pub record: UniformityRecord,
    /// SU of each neighbor, in neighbor order.
    pub neighbor_sus: Vec<Su>,
    pub stats: Option<TestStatistics>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub poly: usize,
    pub mono: usize,
    pub untestable: usize,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "poly={} mono={} untestable={}",
            self.poly, self.mono, self.untestable
        )
    }
}

/// One row per stable word, in rank order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub config: SearchConfig,
    pub rows: Vec<PolysemyTest>,
    pub summary: Summary,
}

/// SU computations over one model and configuration, memoized per stable
/// word.
///
/// Each cache slot is initialized at most once; since a record is a pure
/// function of the model and configuration, concurrent use gives the same
/// results as serial use.
pub struct Analyzer<'m> {
    model: &'m EmbeddingModel,
    cfg: SearchConfig,
    cache: Vec<OnceLock<UniformityRecord>>,
}

impl<'m> Analyzer<'m> {
    pub fn new(model: &'m EmbeddingModel, cfg: SearchConfig) -> Result<Self, SearchError> {
        neighborhood::check_config(model, &cfg)?;
        Ok(Analyzer {
            model,
            cfg,
            cache: (0..cfg.limit).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn model(&self) -> &'m EmbeddingModel {
        self.model
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    fn rank(&self, word: &str) -> Result<usize, SearchError> {
        self.model
            .rank_of(word)
            .ok_or_else(|| SearchError::UnknownToken(word.to_owned()))
    }

    fn compute(&self, rank: usize) -> UniformityRecord {
        let word = self.model.token(rank).to_owned();
        let ranked = match neighborhood::stable_neighbor_ranks(self.model, rank, &self.cfg) {
            Ok(ranked) => ranked,
            Err(why) => {
                return UniformityRecord {
                    word,
                    rank,
                    neighbors: Vec::new(),
                    su: Su::Undefined(why.into()),
                }
            }
        };
        // Sum members in rank order so equal sets give bit-identical SUs.
        let mut members: Vec<usize> = ranked.iter().map(|&(r, _)| r).collect();
        members.push(rank);
        members.sort_unstable();
        let su = match vector_ops::uniformity(members.iter().map(|&r| self.model.vector(r))) {
            Ok(Uniformity::Value(v)) => Su::Defined(v),
            Ok(Uniformity::Degenerate) => Su::Undefined(UndefinedReason::Degenerate),
            Err(e) => unreachable!("model vectors are nonzero and of equal dimension: {}", e),
        };
        let neighbors = ranked
            .into_iter()
            .map(|(r, cosine)| Neighbor {
                token: self.model.token(r).to_owned(),
                rank: r,
                cosine,
            })
            .collect();
        UniformityRecord {
            word,
            rank,
            neighbors,
            su,
        }
    }

    fn record_at(&self, rank: usize) -> UniformityRecord {
        match self.cache.get(rank) {
            Some(slot) => slot.get_or_init(|| self.compute(rank)).clone(),
            None => self.compute(rank),
        }
    }

    fn su_at(&self, rank: usize) -> Su {
        match self.cache.get(rank) {
            Some(slot) => slot.get_or_init(|| self.compute(rank)).su,
            None => self.compute(rank).su,
        }
    }

    pub fn surrounding_uniformity(&self, word: &str) -> Result<UniformityRecord, SearchError> {
        Ok(self.record_at(self.rank(word)?))
    }

    pub fn test(&self, word: &str) -> Result<PolysemyTest, SearchError> {
        Ok(self.test_rank(self.rank(word)?))
    }

    fn test_rank(&self, rank: usize) -> PolysemyTest {
        let record = self.record_at(rank);
        let own = match record.su {
            Su::Defined(v) => v.get(),
            Su::Undefined(reason) => {
                return PolysemyTest {
                    record,
                    neighbor_sus: Vec::new(),
                    stats: None,
                    verdict: Verdict::Untestable(UntestableReason::UndefinedSuSelf(reason)),
                }
            }
        };
        let neighbor_sus: Vec<Su> = record.neighbors.iter().map(|n| self.su_at(n.rank)).collect();

        let undefined = record.neighbors.iter().zip(&neighbor_sus).find_map(|(n, su)| match su {
            Su::Undefined(reason) => Some((n.token.clone(), *reason)),
            Su::Defined(_) => None,
        });
        if let Some((neighbor, reason)) = undefined {
            return PolysemyTest {
                record,
                neighbor_sus,
                stats: None,
                verdict: Verdict::Untestable(UntestableReason::UndefinedSuNeighbor { neighbor, reason }),
            };
        }

        let values: Vec<f64> = neighbor_sus.iter().filter_map(Su::value).collect();
        let stats = outlier_stats(&values, self.cfg.sigma_k).expect("n_neighbors >= 2 is validated");
        let verdict = judge(own, &stats);
        PolysemyTest {
            record,
            neighbor_sus,
            stats: Some(stats),
            verdict,
        }
    }

    /// Tests every stable word, in parallel, returning rows in rank order.
    pub fn batch(&self) -> BatchReport {
        let rows: Vec<PolysemyTest> = (0..self.cfg.limit)
            .into_par_iter()
            .map(|rank| self.test_rank(rank))
            .collect();
        let mut summary = Summary::default();
        for row in &rows {
            match row.verdict {
                Verdict::Polysemic => summary.poly += 1,
                Verdict::NotDetected => summary.mono += 1,
                Verdict::Untestable(_) => summary.untestable += 1,
            }
        }
        BatchReport {
            config: self.cfg,
            rows,
            summary,
        }
    }
}

pub fn surrounding_uniformity(
    model: &EmbeddingModel,
    word: &str,
    cfg: &SearchConfig,
) -> Result<UniformityRecord, SearchError> {
    Analyzer::new(model, *cfg)?.surrounding_uniformity(word)
}

pub fn polysemy_test(model: &EmbeddingModel, word: &str, cfg: &SearchConfig) -> Result<PolysemyTest, SearchError> {
    Analyzer::new(model, *cfg)?.test(word)
}

pub fn batch_analyze(model: &EmbeddingModel, cfg: &SearchConfig) -> Result<BatchReport, SearchError> {
    Ok(Analyzer::new(model, *cfg)?.batch())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stats_for_may_neighbors() {
        // can, should, might, will
        let s = outlier_stats(&[0.9252, 0.9232, 0.9179, 0.9266], 3.0).unwrap();
        assert!(close(s.mean, 0.9232, 5e-4));
        assert!(close(s.sigma, 0.0038, 5e-4));
        assert!(close(s.threshold, 0.9118, 5e-4));
        assert_eq!(judge(0.8917, &s), Verdict::Polysemic);
    }

    #[test]
    fn stats_for_might_neighbors() {
        // would, could, should, cannot. The auxiliary-verb table lists
        // cannot at 0.9221; the worked example uses 0.9224.
        let s = outlier_stats(&[0.9266, 0.9290, 0.9232, 0.9224], 3.0).unwrap();
        assert!(close(s.mean, 0.9253, 5e-4));
        assert!(close(s.threshold, 0.9157, 5e-4));
        assert_eq!(judge(0.9179, &s), Verdict::NotDetected);
        let s = outlier_stats(&[0.9266, 0.9290, 0.9232, 0.9221], 3.0).unwrap();
        assert_eq!(judge(0.9179, &s), Verdict::NotDetected);
    }

    #[test]
    fn zero_dispersion() {
        let s = outlier_stats(&[0.93; 4], 3.0).unwrap();
        assert_eq!(s.sigma, 0.0);
        assert_eq!(s.threshold, s.mean);
        assert_eq!(s.mean, 0.93);
        assert_eq!(judge(0.5, &s), Verdict::Untestable(UntestableReason::ZeroVariance));
    }

    #[test]
    fn too_few_values() {
        assert_eq!(outlier_stats(&[0.9], 3.0), Err(TooFewValues(1)));
        assert_eq!(outlier_stats(&[], 3.0), Err(TooFewValues(0)));
    }

    #[test]
    fn strict_comparison() {
        let s = outlier_stats(&[0.9, 0.8], 0.0).unwrap();
        assert_eq!(judge(s.threshold, &s), Verdict::NotDetected);
    }

    fn cfg(n: usize, limit: usize, scope: usize) -> SearchConfig {
        SearchConfig {
            n_neighbors: n,
            limit,
            scope,
            sigma_k: 3.0,
        }
    }

    #[test]
    fn su_of_scaled_copies_is_one() {
        let m = EmbeddingModel::from_entries(
            3,
            [
                ("w", vec![1.0, 2.0, 3.0]),
                ("a", vec![2.0, 4.0, 6.0]),
                ("b", vec![0.5, 1.0, 1.5]),
                ("c", vec![-1.0, 0.0, 0.0]),
            ],
        )
        .unwrap();
        let r = surrounding_uniformity(&m, "w", &cfg(2, 4, 2)).unwrap();
        assert!(close(r.su.value().unwrap(), 1.0, 1e-12));
        let names: Vec<&str> = r.neighbors.iter().map(|n| n.token.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn undefined_outside_stable_set() {
        let m = EmbeddingModel::from_entries(
            1,
            [("a", vec![1.0]), ("b", vec![2.0]), ("c", vec![3.0]), ("d", vec![4.0])],
        )
        .unwrap();
        let r = surrounding_uniformity(&m, "d", &cfg(2, 3, 2)).unwrap();
        assert_eq!(r.su, Su::Undefined(UndefinedReason::QueryNotStable));
        let t = polysemy_test(&m, "d", &cfg(2, 3, 2)).unwrap();
        assert_eq!(
            t.verdict,
            Verdict::Untestable(UntestableReason::UndefinedSuSelf(UndefinedReason::QueryNotStable))
        );
        assert!(matches!(
            polysemy_test(&m, "nope", &cfg(2, 3, 2)),
            Err(SearchError::UnknownToken(_))
        ));
    }

    #[test]
    fn degenerate_su() {
        // w's two neighbors exactly cancel w.
        let m = EmbeddingModel::from_entries(
            2,
            [("w", vec![2.0, 0.0]), ("a", vec![-1.0, 1.0]), ("b", vec![-1.0, -1.0])],
        )
        .unwrap();
        let r = surrounding_uniformity(&m, "w", &cfg(2, 3, 2)).unwrap();
        assert_eq!(r.su, Su::Undefined(UndefinedReason::Degenerate));
    }

    #[test]
    fn shared_neighborhoods_have_zero_variance() {
        // Five stable words, N = 4: every SU is over the same five vectors.
        let m = EmbeddingModel::from_entries(
            3,
            [
                ("a", vec![1.0, 0.1, 0.0]),
                ("b", vec![1.0, 0.0, 0.13]),
                ("c", vec![0.9, -0.1, 0.0]),
                ("d", vec![1.1, 0.0, -0.07]),
                ("e", vec![1.0, 0.05, 0.05]),
            ],
        )
        .unwrap();
        let report = batch_analyze(&m, &cfg(4, 5, 4)).unwrap();
        assert_eq!(
            report.summary,
            Summary {
                poly: 0,
                mono: 0,
                untestable: 5
            }
        );
        for row in &report.rows {
            assert_eq!(row.verdict, Verdict::Untestable(UntestableReason::ZeroVariance));
        }
    }

    #[test]
    fn undefined_neighbor_su_makes_word_untestable() {
        let m = EmbeddingModel::from_entries(
            2,
            [
                ("w", vec![1.0, 0.0]),
                ("a", vec![1.0, 0.1]),
                ("b", vec![1.0, -0.1]),
                ("x", vec![1.0, 0.3]),
                ("u", vec![1.0, 0.12]),
                ("v", vec![1.0, 0.13]),
            ],
        )
        .unwrap();
        // Stable: w, a, b, x. The two nearest words of a are u and v, which
        // are not stable.
        let t = polysemy_test(&m, "w", &cfg(2, 4, 2)).unwrap();
        assert_eq!(t.record.neighbors.len(), 2);
        match t.verdict {
            Verdict::Untestable(UntestableReason::UndefinedSuNeighbor { ref neighbor, reason }) => {
                assert_eq!(neighbor, "a");
                assert_eq!(reason, UndefinedReason::InsufficientNeighbors { found: 0 });
            }
            ref other => panic!("{:?}", other),
        }
    }
}
