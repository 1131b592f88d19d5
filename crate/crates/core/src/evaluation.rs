//! Agreement between computed verdicts and human judgments.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

/// Upper-tail critical values of χ² with one degree of freedom.
const CHI2_1DF_CRITICAL: [(f64, f64); 2] = [(0.05, 3.841_458_820_694_124), (0.01, 6.634_896_601_021_214)];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("a marginal total is zero; the statistic is undefined")]
    ZeroMarginal,
    #[error("unsupported significance level {0}; use 0.05 or 0.01")]
    UnsupportedAlpha(f64),
    #[error("labels line {line}: {reason}")]
    Labels { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Mono,
    Poly,
}

impl Label {
    fn index(self) -> usize {
        match self {
            Label::Mono => 0,
            Label::Poly => 1,
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mono" => Ok(Label::Mono),
            "poly" => Ok(Label::Poly),
            other => Err(format!("expected mono or poly, got {:?}", other)),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Mono => "mono",
            Label::Poly => "poly",
        })
    }
}

/// One judged word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub word: String,
    pub human: Label,
    pub computer: Label,
}

/// 2x2 agreement table. Rows are the human label, columns the computed
/// label, both ordered mono, poly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix2x2 {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix2x2 {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix2x2 { counts }
    }

    pub fn add(&mut self, human: Label, computer: Label) {
        self.counts[human.index()][computer.index()] += 1;
    }

    pub fn get(&self, human: Label, computer: Label) -> u64 {
        self.counts[human.index()][computer.index()]
    }

    pub fn row_totals(&self) -> [u64; 2] {
        [
            self.counts[0][0] + self.counts[0][1],
            self.counts[1][0] + self.counts[1][1],
        ]
    }

    pub fn column_totals(&self) -> [u64; 2] {
        [
            self.counts[0][0] + self.counts[1][0],
            self.counts[0][1] + self.counts[1][1],
        ]
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }
}

pub fn confusion<'a, I>(judgments: I) -> ConfusionMatrix2x2
where
    I: IntoIterator<Item = &'a Judgment>,
{
    let mut m = ConfusionMatrix2x2::default();
    for j in judgments {
        m.add(j.human, j.computer);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub alpha: f64,
    pub critical: f64,
    pub significant: bool,
}

/// Pearson χ² with Yates' continuity correction.
///
/// Each cell contributes `(max(|O - E| - 0.5, 0))² / E`, with `E` the product
/// of the marginals over the total. Significance compares against the 1-df
/// critical value for `alpha` (0.05 or 0.01).
pub fn chi_square_yates(m: &ConfusionMatrix2x2, alpha: f64) -> Result<ChiSquare, EvalError> {
    let critical = CHI2_1DF_CRITICAL
        .iter()
        .find(|(a, _)| *a == alpha)
        .map(|&(_, c)| c)
        .ok_or(EvalError::UnsupportedAlpha(alpha))?;
    let rows = m.row_totals();
    let cols = m.column_totals();
    if rows.contains(&0) || cols.contains(&0) {
        return Err(EvalError::ZeroMarginal);
    }
    let total = m.total() as f64;
    let mut statistic = 0.0;
    for (i, row) in m.counts.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / total;
            let d = ((observed as f64 - expected).abs() - 0.5).max(0.0);
            statistic += d * d / expected;
        }
    }
    Ok(ChiSquare {
        statistic,
        alpha,
        critical,
        significant: statistic > critical,
    })
}

/// Reads `word<TAB>human<TAB>computer` lines. Blank lines and lines starting
/// with `#` are skipped.
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<Judgment>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| EvalError::Labels { line: i + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        out.push(Judgment {
            word: fields[0].to_owned(),
            human: fields[1].parse().map_err(bad)?,
            computer: fields[2].parse().map_err(bad)?,
        });
    }
    Ok(out)
}
