//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use ne_core::affinity::{binary_affinities, AffinityGraph, AffinityKind};
use ne_core::data::DataMatrix;
use ne_core::knn::{build_knn, KnnAlgorithm};
use ne_core::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_embedding(n: usize, scale: f64, seed: u64) -> Embedding {
    let mut r = rng(seed);
    Embedding::new(
        (0..n)
            .map(|_| [r.random_range(-scale..scale), r.random_range(-scale..scale)])
            .collect(),
    )
    .unwrap()
}

pub fn random_data(n: usize, dim: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    DataMatrix::new(
        n,
        dim,
        (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and the matching unit eigenvectors.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = order
        .iter()
        .map(|&k| (0..n).map(|r| v[r][k]).collect())
        .collect();
    (vals, vecs)
}

/// Central finite-difference gradient of `f` at the flattened coordinates.
pub fn fd_gradient(y: &Embedding, h: f64, f: impl Fn(&Embedding) -> f64) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; y.n()];
    for i in 0..y.n() {
        for c in 0..2 {
            let mut plus = y.clone();
            plus.coords_mut()[i][c] += h;
            let mut minus = y.clone();
            minus.coords_mut()[i][c] -= h;
            out[i][c] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    out
}

pub fn relative_error(got: &[[f64; 2]], want: &[[f64; 2]]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g[0] - w[0]).powi(2) + (g[1] - w[1]).powi(2))
        .sum();
    let den: f64 = want.iter().map(|w| w[0] * w[0] + w[1] * w[1]).sum();
    (num / den).sqrt()
}

fn sq(y: &Embedding, i: usize, j: usize) -> f64 {
    let (a, b) = (y.coords()[i], y.coords()[j]);
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Exaggerated t-SNE loss `-sum p_ij log w_ij + (1 / rho) log sum w_ij` over
/// ordered pairs, with `p` the dense affinities normalized to sum 1.
pub fn tsne_loss(v: &[Vec<f64>], y: &Embedding, rho: f64) -> f64 {
    let n = y.n();
    let total: f64 = v.iter().flatten().sum();
    let (mut att, mut z) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = 1.0 / (1.0 + sq(y, i, j));
            att -= v[i][j] / total * w.ln();
            z += w;
        }
    }
    att + z.ln() / rho
}

/// UMAP loss over unordered pairs: `v ln(1 + d^2)` attraction plus the
/// smoothed repulsion `(gamma / rho) ln((1 + d^2) / (d^2 + eps)) / (1 - eps)`.
pub fn umap_loss(v: &[Vec<f64>], y: &Embedding, gamma: f64, eps: f64, rho: f64) -> f64 {
    let n = y.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = sq(y, i, j);
            total += v[i][j] * (1.0 + s).ln();
            total += gamma / rho * ((1.0 + s) / (s + eps)).ln() / (1.0 - eps);
        }
    }
    total
}

/// FA2 energy: `a sum_edges d^2 / 2 - sum_{i<j} m_i m_j ln d`.
pub fn fa2_energy(edges: &[(usize, usize)], masses: &[f64], y: &Embedding, a: f64) -> f64 {
    let n = y.n();
    let mut e = 0.0;
    for &(i, j) in edges {
        e += 0.5 * a * sq(y, i, j);
    }
    for i in 0..n {
        for j in i + 1..n {
            e -= masses[i] * masses[j] * 0.5 * sq(y, i, j).ln();
        }
    }
    e
}

/// Brute-force k nearest neighbors (excluding self) by squared distance,
/// ties broken by index.
pub fn brute_knn(x: &DataMatrix, i: usize, k: usize) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = (0..x.n())
        .filter(|&j| j != i)
        .map(|j| {
            (
                x.row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
                j,
            )
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d
}

pub fn union_find_components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Distance correlation from full double-centered distance matrices.
pub fn dcor_full(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    let n = p.len();
    let dist = |s: &[[f64; 2]]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ((s[i][0] - s[j][0]).powi(2) + (s[i][1] - s[j][1]).powi(2)).sqrt())
                    .collect()
            })
            .collect()
    };
    let center = |d: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let rows: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let all: f64 = rows.iter().sum::<f64>() / n as f64;
        (0..n)
            .map(|i| (0..n).map(|j| d[i][j] - rows[i] - rows[j] + all).collect())
            .collect()
    };
    let (a, b) = (center(dist(p)), center(dist(q)));
    let dot = |x: &[Vec<f64>], y: &[Vec<f64>]| -> f64 {
        x.iter()
            .flatten()
            .zip(y.iter().flatten())
            .map(|(u, v)| u * v)
            .sum::<f64>()
            / (n * n) as f64
    };
    let (cov, vx, vy) = (dot(&a, &b), dot(&a, &a), dot(&b, &b));
    if vx * vy <= 0.0 {
        return 0.0;
    }
    (cov / (vx * vy).sqrt()).max(0.0).sqrt()
}

/// Bisection on sigma in `(0, hi]` for a Gaussian row hitting `2^H = target`.
pub fn bisect_sigma(sq_dists: &[f64], target: f64, hi: f64) -> f64 {
    let perp = |sigma: f64| -> f64 {
        let w: Vec<f64> = sq_dists
            .iter()
            .map(|d| (-d / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = w.iter().sum();
        let h: f64 = w
            .iter()
            .map(|x| x / s)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum();
        2f64.powf(h)
    };
    let (mut lo, mut hi) = (1e-6, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if perp(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Uniform points in `[0, 3] x [0, 1]`; the elongated domain keeps the
/// smallest Laplacian eigenvalues well separated.
pub fn strip(n: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let v: Vec<f64> = (0..n)
        .flat_map(|_| [r.random_range(0.0..3.0), r.random_range(0.0..1.0)])
        .collect();
    DataMatrix::new(n, 2, v).unwrap()
}

pub fn strip_graph(n: usize, seed: u64) -> AffinityGraph {
    let g = build_knn(&strip(n, seed), 10, KnnAlgorithm::Exact)
        .unwrap()
        .symmetrize_union();
    assert_eq!(g.n_components(), 1);
    binary_affinities(&g).unwrap()
}

/// Rescales `v_ij` by `s_i s_j` until every weighted degree is 1.
pub fn balanced(a: &AffinityGraph) -> AffinityGraph {
    let n = a.n();
    let mut s = vec![1.0; n];
    for _ in 0..100_000 {
        let d: Vec<f64> = (0..n)
            .map(|i| s[i] * a.row(i).map(|(j, v)| v * s[j]).sum::<f64>())
            .collect();
        if d.iter().all(|x| (x - 1.0).abs() < 1e-14) {
            break;
        }
        for i in 0..n {
            s[i] /= d[i].sqrt();
        }
    }
    AffinityGraph::from_pairs(
        n,
        AffinityKind::GaussianPerplexity,
        a.pairs().iter().map(|&(i, j, v)| (i, j, v * s[i] * s[j])),
    )
    .unwrap()
}

pub fn dense_from_pairs(a: &AffinityGraph) -> (Vec<Vec<f64>>, Vec<f64>) {
    let v = a.to_dense();
    let d: Vec<f64> = v.iter().map(|r| r.iter().sum()).collect();
    (v, d)
}

pub fn normalized_laplacian(a: &AffinityGraph) -> Vec<Vec<f64>> {
    let (v, d) = dense_from_pairs(a);
    let n = a.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - v[i][j] / (d[i] * d[j]).sqrt())
                .collect()
        })
        .collect()
}

pub fn laplacian(a: &AffinityGraph) -> Vec<Vec<f64>> {
    let (v, d) = dense_from_pairs(a);
    let n = a.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { d[i] } else { -v[i][j] })
                .collect()
        })
        .collect()
}
