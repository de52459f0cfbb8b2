//! Evaluation: kNN recall, distance correlation, embedding span and the
//! effective-repulsion estimator for negative-sampling UMAP.

mod gamma;
mod stats;

pub use gamma::{
    estimate_effective_gamma, log_grid, GammaEstimate, GammaProtocol, Reference, SizeEstimate,
};
pub use stats::{loglog_slope, pearson, ranks, spearman};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::affinity::AffinityGraph;
use crate::embedding::{norm2, sub, Embedding};
use crate::error::{Error, Result};

pub const DEFAULT_RECALL_K: usize = 15;
pub const DEFAULT_RECALL_SAMPLES: usize = 10_000;
pub const DEFAULT_DCOR_SUBSAMPLE: usize = 5_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub params: BTreeMap<String, Value>,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub runtime_s: f64,
    /// Set when the value is a fallback, e.g. distance correlation of a
    /// constant embedding.
    #[serde(default)]
    pub degenerate: bool,
}

impl MetricReport {
    fn new(
        metric: &str,
        value: f64,
        n_samples: usize,
        seed: Option<u64>,
        started: Instant,
    ) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            params: BTreeMap::new(),
            n_samples,
            seed,
            runtime_s: started.elapsed().as_secs_f64(),
            degenerate: false,
        }
    }

    fn param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

/// Indices `0..n`, or a sorted uniform sample of `m` of them when `m < n`.
pub fn sample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// The `k` strongest affinities of node `i`, ties broken by lower index.
pub fn affinity_top_k(a: &AffinityGraph, i: usize, k: usize) -> Vec<usize> {
    let mut row: Vec<(usize, f64)> = a.row(i).collect();
    row.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    row.truncate(k);
    row.into_iter().map(|(j, _)| j).collect()
}

/// The `k` nearest other points of `y_i`, ties broken by lower index.
pub fn embedding_knn(y: &Embedding, i: usize, k: usize) -> Vec<usize> {
    let c = y.coords();
    let mut cand: Vec<(f64, usize)> = c
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &p)| (norm2(sub(c[i], p)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Fraction of each sampled point's `k` strongest affinities that are also
/// among its `k` nearest neighbors in `y`, averaged over the sample. Points
/// with fewer than `k` affinities still divide by `k`.
pub fn knn_recall(
    a: &AffinityGraph,
    y: &Embedding,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MetricReport> {
    let started = Instant::now();
    let n = y.n();
    if a.n() != n {
        return Err(Error::Shape {
            expected: format!("{} points", a.n()),
            got: format!("{n} embedding rows"),
        });
    }
    if k == 0 || k >= n || n_samples == 0 {
        return Err(Error::invalid(format!(
            "need 1 <= k < n and a nonempty sample, got k = {k}, n = {n}"
        )));
    }
    let idx = sample_indices(n, n_samples, seed);
    let per_point: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let high = affinity_top_k(a, i, k);
            let low = embedding_knn(y, i, k);
            high.iter().filter(|j| low.contains(j)).count() as f64 / k as f64
        })
        .collect();
    let value = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(
        MetricReport::new("knn_recall", value, idx.len(), Some(seed), started)
            .param("k", json!(k))
            .param("affinity_kind", json!(a.kind().to_string())),
    )
}

/// Squared distance covariance and the two squared distance variances of
/// paired point sets (biased V-statistics), using O(m) memory.
pub fn distance_covariances(p: &[[f64; 2]], q: &[[f64; 2]]) -> (f64, f64, f64) {
    let m = p.len();
    let dist = |s: &[[f64; 2]], i: usize, j: usize| norm2(sub(s[i], s[j])).sqrt();
    let row_means = |s: &[[f64; 2]]| -> Vec<f64> {
        (0..m)
            .into_par_iter()
            .map(|i| (0..m).map(|j| dist(s, i, j)).sum::<f64>() / m as f64)
            .collect()
    };
    let (ra, rb) = (row_means(p), row_means(q));
    let ga = ra.iter().sum::<f64>() / m as f64;
    let gb = rb.iter().sum::<f64>() / m as f64;
    let rows: Vec<[f64; 3]> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 3];
            for j in 0..m {
                let a = dist(p, i, j) - ra[i] - ra[j] + ga;
                let b = dist(q, i, j) - rb[i] - rb[j] + gb;
                acc[0] += a * b;
                acc[1] += a * a;
                acc[2] += b * b;
            }
            acc
        })
        .collect();
    let mm = (m * m) as f64;
    let total = rows
        .iter()
        .fold([0.0; 3], |s, r| [s[0] + r[0], s[1] + r[1], s[2] + r[2]]);
    (total[0] / mm, total[1] / mm, total[2] / mm)
}

/// Distance correlation of two layouts of the same points, on a shared
/// random subsample of at most `subsample` points.
pub fn distance_correlation(
    y1: &Embedding,
    y2: &Embedding,
    subsample: usize,
    seed: u64,
) -> Result<MetricReport> {
    let started = Instant::now();
    if y1.n() != y2.n() {
        return Err(Error::Shape {
            expected: format!("{} points", y1.n()),
            got: format!("{} points", y2.n()),
        });
    }
    if y1.n() < 2 || subsample < 2 {
        return Err(Error::invalid(
            "distance correlation needs at least two points",
        ));
    }
    let idx = sample_indices(y1.n(), subsample, seed);
    let p: Vec<[f64; 2]> = idx.iter().map(|&i| y1.coords()[i]).collect();
    let q: Vec<[f64; 2]> = idx.iter().map(|&i| y2.coords()[i]).collect();
    let (cov, var_p, var_q) = distance_covariances(&p, &q);
    let denom = (var_p * var_q).sqrt();
    let degenerate = !(denom > 0.0);
    let value = if degenerate {
        0.0
    } else {
        (cov / denom).clamp(0.0, 1.0).sqrt()
    };
    let mut report = MetricReport::new(
        "distance_correlation",
        value,
        idx.len(),
        Some(seed),
        started,
    )
    .param("subsample", json!(subsample));
    report.degenerate = degenerate;
    Ok(report)
}

/// `max - min` over both coordinates.
pub fn embedding_span(y: &Embedding) -> MetricReport {
    MetricReport::new("embedding_span", y.span(), y.n(), None, Instant::now())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityKind;

    fn cloud(n: usize, seed: u64) -> Embedding {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Embedding::new(
            (0..n)
                .map(|_| {
                    [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn span_of_unit_square() {
        let y = Embedding::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(embedding_span(&y).value, 1.0);
        assert_eq!(embedding_span(&y.scaled(3.0)).value, 3.0);
    }

    #[test]
    fn self_correlation_is_exactly_one() {
        let y = cloud(300, 1);
        assert_eq!(distance_correlation(&y, &y, 5000, 0).unwrap().value, 1.0);
    }

    #[test]
    fn constant_layout_is_degenerate() {
        let y = cloud(50, 2);
        let c = Embedding::new(vec![[1.0, 1.0]; 50]).unwrap();
        let r = distance_correlation(&y, &c, 5000, 0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn perfect_recall_on_path() {
        let pairs: Vec<(usize, usize, f64)> = (0..9).map(|i| (i, i + 1, 1.0)).collect();
        let a = AffinityGraph::from_pairs(10, AffinityKind::BinaryKnn, pairs).unwrap();
        let y = Embedding::new((0..10).map(|i| [i as f64, 0.0]).collect()).unwrap();
        // Interior points: both path neighbors are the two nearest; the ends
        // have one affinity and divide by k = 2.
        let r = knn_recall(&a, &y, 2, 100, 0).unwrap();
        assert!((r.value - (8.0 + 0.5 + 0.5) / 10.0).abs() < 1e-15);
        let r1 = knn_recall(&a, &y, 1, 100, 0).unwrap();
        assert_eq!(r1.value, 1.0);
    }

    #[test]
    fn sampling_without_replacement() {
        let idx = sample_indices(100, 30, 4);
        assert_eq!(idx.len(), 30);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_indices(10, 30, 4), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn report_json_fields() {
        let r = embedding_span(&cloud(5, 3));
        let v: Value = serde_json::to_value(&r).unwrap();
        for key in ["metric", "value", "params", "seed", "runtime_s"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
