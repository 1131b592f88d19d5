//! Brute-force reference computations and random model generators shared by
//! the integration tests. Nothing here calls into the scan, SU or statistics
//! code it is used to check.

#![allow(dead_code)]

use polyscope::{EmbeddingModel, SearchConfig};
use rand::Rng;

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn oracle_dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += u[i] * v[i];
    }
    acc
}

pub fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = oracle_dot(u, u).sqrt();
    let nv = oracle_dot(v, v).sqrt();
    (oracle_dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Every other word, fully sorted: cosine descending, then rank ascending.
pub fn oracle_ranking(model: &EmbeddingModel, query: usize) -> Vec<(usize, f64)> {
    let q = model.vector(query);
    let mut all: Vec<(usize, f64)> = (0..model.vocab_size())
        .filter(|&r| r != query)
        .map(|r| (r, oracle_cosine(q, model.vector(r))))
        .collect();
    all.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then_with(|| model.token(a.0).cmp(model.token(b.0)))
    });
    all
}

/// Stable neighbors by exhaustive scan, or the number found when short.
pub fn oracle_stable_neighbors(
    model: &EmbeddingModel,
    query: usize,
    cfg: &SearchConfig,
) -> Result<Vec<(usize, f64)>, Option<usize>> {
    if query >= cfg.limit {
        return Err(None);
    }
    let picked: Vec<(usize, f64)> = oracle_ranking(model, query)
        .into_iter()
        .take(cfg.scope)
        .filter(|&(r, _)| r < cfg.limit)
        .take(cfg.n_neighbors)
        .collect();
    if picked.len() < cfg.n_neighbors {
        Err(Some(picked.len()))
    } else {
        Ok(picked)
    }
}

/// `|Σv| / Σ|v|` straight from the definition.
pub fn oracle_uniformity(vs: &[&[f64]]) -> f64 {
    let dim = vs[0].len();
    let mut sum = vec![0.0; dim];
    let mut lengths = 0.0;
    for v in vs {
        lengths += oracle_dot(v, v).sqrt();
        for i in 0..dim {
            sum[i] += v[i];
        }
    }
    oracle_dot(&sum, &sum).sqrt() / lengths
}

pub fn oracle_su(model: &EmbeddingModel, query: usize, cfg: &SearchConfig) -> Option<f64> {
    let ns = oracle_stable_neighbors(model, query, cfg).ok()?;
    let mut vs: Vec<&[f64]> = vec![model.vector(query)];
    vs.extend(ns.iter().map(|&(r, _)| model.vector(r)));
    Some(oracle_uniformity(&vs))
}

/// Two-pass mean and n-1 standard deviation.
pub fn two_pass_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Poly,
    Mono,
    Untestable,
}

/// The whole test by brute force, with a tolerance-free comparison.
pub fn oracle_verdict(model: &EmbeddingModel, query: usize, cfg: &SearchConfig) -> OracleVerdict {
    let own = match oracle_su(model, query, cfg) {
        Some(v) => v,
        None => return OracleVerdict::Untestable,
    };
    let ns = oracle_stable_neighbors(model, query, cfg).unwrap();
    let mut sus = Vec::new();
    for (r, _) in ns {
        match oracle_su(model, r, cfg) {
            Some(v) => sus.push(v),
            None => return OracleVerdict::Untestable,
        }
    }
    let (m, s) = two_pass_stats(&sus);
    if s == 0.0 {
        OracleVerdict::Untestable
    } else if own < m - cfg.sigma_k * s {
        OracleVerdict::Poly
    } else {
        OracleVerdict::Mono
    }
}

pub fn random_unit_normalish<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if oracle_dot(&v, &v) > 1e-6 {
            return v;
        }
    }
}

/// A random model. With `lattice` set, components are small integers, so
/// exact cosine ties between distinct words are common.
pub fn random_model<R: Rng>(rng: &mut R, vocab: usize, dim: usize, lattice: bool) -> EmbeddingModel {
    let entries = (0..vocab).map(|i| {
        let v = if lattice {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                if v.iter().any(|&x| x != 0.0) {
                    break v;
                }
            }
        } else {
            random_unit_normalish(rng, dim)
        };
        (format!("w{}", i), v)
    });
    EmbeddingModel::from_entries(dim, entries).unwrap()
}

/// Random rotation as a product of an even number of Householder
/// reflections.
pub struct Rotation {
    normals: Vec<Vec<f64>>,
}

impl Rotation {
    pub fn random<R: Rng>(rng: &mut R, dim: usize, reflections: usize) -> Self {
        let normals = (0..reflections * 2)
            .map(|_| {
                let v = random_unit_normalish(rng, dim);
                let n = oracle_dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Rotation { normals }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for n in &self.normals {
            let d = 2.0 * oracle_dot(&out, n);
            for i in 0..out.len() {
                out[i] -= d * n[i];
            }
        }
        out
    }

    pub fn apply_model(&self, model: &EmbeddingModel) -> EmbeddingModel {
        EmbeddingModel::from_entries(model.dim(), model.entries().map(|(t, v)| (t.to_owned(), self.apply(v)))).unwrap()
    }
}

pub fn scaled_model(model: &EmbeddingModel, factor: f64) -> EmbeddingModel {
    EmbeddingModel::from_entries(
        model.dim(),
        model
            .entries()
            .map(|(t, v)| (t.to_owned(), v.iter().map(|x| x * factor).collect())),
    )
    .unwrap()
}

/// Two tight direction clusters plus one word interpolated between them,
/// nearer the first. All 13 words are stable.
pub fn three_cluster_model() -> EmbeddingModel {
    let dim = 6;
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let offsets: [(f64, f64); 6] = [
        (0.050, 0.010),
        (-0.020, 0.060),
        (0.035, -0.045),
        (-0.055, -0.015),
        (0.010, 0.030),
        (-0.030, -0.060),
    ];
    for (i, (p, q)) in offsets.iter().enumerate() {
        let mut v = vec![0.0; dim];
        v[0] = 1.0 + 0.02 * i as f64;
        v[2] = *p;
        v[3] = *q;
        entries.push((format!("a{}", i), v));
    }
    let offsets_b: [(f64, f64); 6] = [
        (0.040, -0.020),
        (0.000, 0.070),
        (-0.050, 0.030),
        (0.025, 0.045),
        (-0.020, -0.050),
        (0.060, 0.050),
    ];
    for (i, (p, q)) in offsets_b.iter().enumerate() {
        let mut v = vec![0.0; dim];
        v[1] = 1.0 - 0.015 * i as f64;
        v[4] = *p;
        v[5] = *q;
        entries.push((format!("b{}", i), v));
    }
    entries.push(("x".to_owned(), vec![0.78, 0.45, 0.0, 0.0, 0.0, 0.0]));
    EmbeddingModel::from_entries(dim, entries).unwrap()
}

pub fn three_cluster_config() -> SearchConfig {
    SearchConfig {
        n_neighbors: 4,
        limit: 13,
        scope: 12,
        sigma_k: 3.0,
    }
}
