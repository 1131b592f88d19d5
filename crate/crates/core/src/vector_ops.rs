//! Dense vector arithmetic in double precision.
//!
//! All accumulation (dot products, norms, vector sums) happens in `f64`.
//! Surrounding uniformity values of neighboring words can differ by about
//! 1e-3, so rounding noise must stay far below that.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("empty vector set")]
    Empty,
    #[error("vector {index} is the zero vector")]
    ZeroVector { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine from a precomputed dot product and norms, clamped to [-1, 1].
///
/// The neighbor scan and [`cosine`] both go through here so that they
/// agree bit for bit. Orthogonal pairs give `+0.0`, never `-0.0`, so that
/// a total order on cosines treats all of them as tied.
#[inline]
pub fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0) + 0.0
}

/// Cosine similarity of two nonzero vectors of equal dimension.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    if u.len() != v.len() {
        return Err(VectorError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(VectorError::ZeroVector { index: 0 });
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Err(VectorError::ZeroVector { index: 1 });
    }
    Ok(cosine_from_parts(dot(u, v), nu, nv))
}

/// A uniformity ratio, guaranteed to lie in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct UniformityValue(f64);

impl UniformityValue {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for UniformityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Outcome of [`uniformity`]. A zero resultant is reported as `Degenerate`
/// rather than as the value 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uniformity {
    Value(UniformityValue),
    Degenerate,
}

impl Uniformity {
    pub fn value(self) -> Option<f64> {
        match self {
            Uniformity::Value(v) => Some(v.get()),
            Uniformity::Degenerate => None,
        }
    }
}

/// Uniformity of a set of vectors: `|Σ v| / Σ |v|`.
///
/// By the triangle inequality the ratio is at most 1, with equality iff all
/// vectors point in the same direction. Vectors are summed in the order
/// given; callers that need identical results for identical sets should
/// pass them in a canonical order.
pub fn uniformity<'a, I>(vectors: I) -> Result<Uniformity, VectorError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(VectorError::Empty)?;
    let dim = first.len();
    let mut resultant = vec![0.0f64; dim];
    let mut norm_sum = 0.0f64;

    for (index, v) in std::iter::once(first).chain(iter).enumerate() {
        if v.len() != dim {
            return Err(VectorError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(VectorError::ZeroVector { index });
        }
        norm_sum += n;
        for (acc, x) in resultant.iter_mut().zip(v) {
            *acc += x;
        }
    }

    let length = norm(&resultant);
    if length == 0.0 {
        return Ok(Uniformity::Degenerate);
    }
    Ok(Uniformity::Value(UniformityValue((length / norm_sum).min(1.0))))
}
