//! Laplacian eigenmaps and the Markov-chain iteration that exaggerated
//! t-SNE approaches in the limit of infinite exaggeration.

mod lanczos;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::data::orient;
use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// Above this size the eigensolver switches from dense to Lanczos.
pub const DENSE_MAX_N: usize = 2000;
/// Default `eta` as a fraction of `1 / max_i D_ii`.
pub const DEFAULT_ETA_FRACTION: f64 = 0.9;

/// Matrix-free graph operators built from a symmetric affinity matrix `V`:
/// degrees `D`, `L = D - V`, `L_norm = D^-1/2 L D^-1/2` and the Markov
/// operator `M = I - eta D + eta V`.
#[derive(Clone, Debug)]
pub struct GraphOperators {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    inv_sqrt_degrees: Vec<f64>,
    eta: f64,
}

pub fn build_operators(a: &AffinityGraph, eta: Option<f64>) -> Result<GraphOperators> {
    let n = a.n();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for i in 0..n {
        for (j, v) in a.row(i) {
            targets.push(j);
            weights.push(v);
        }
        offsets.push(targets.len());
    }
    let degrees = a.weighted_degrees();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::invalid(format!("node {i} has no edges")));
    }
    let max_degree = degrees.iter().copied().fold(0.0, f64::max);
    let max_eta = 1.0 / max_degree;
    let eta = match eta {
        None => DEFAULT_ETA_FRACTION * max_eta,
        Some(e) if !(e > 0.0) => {
            return Err(Error::invalid(format!("eta must be positive, got {e}")))
        }
        Some(e) if e > max_eta => {
            return Err(Error::EtaTooLarge {
                eta: e,
                max: max_eta,
            })
        }
        Some(e) => e,
    };
    Ok(GraphOperators {
        n,
        offsets,
        targets,
        weights,
        inv_sqrt_degrees: degrees.iter().map(|d| 1.0 / d.sqrt()).collect(),
        degrees,
        eta,
    })
}

impl GraphOperators {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    /// `V x`.
    pub fn apply_affinity(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `L x = D x - V x`.
    pub fn apply_laplacian(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.degrees[i] * x[i] - self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .collect()
    }

    /// `L_norm x = x - D^-1/2 V D^-1/2 x`.
    pub fn apply_normalized_laplacian(&self, x: &[f64]) -> Vec<f64> {
        let s = &self.inv_sqrt_degrees;
        (0..self.n)
            .map(|i| x[i] - s[i] * self.row(i).map(|(j, v)| v * s[j] * x[j]).sum::<f64>())
            .collect()
    }

    /// `M x = x - eta L x`.
    pub fn apply_markov(&self, x: &[f64]) -> Vec<f64> {
        let lx = self.apply_laplacian(x);
        x.iter().zip(lx).map(|(xi, l)| xi - self.eta * l).collect()
    }

    fn dense_affinity(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Dense `L`. Intended for small graphs and tests.
    pub fn dense_laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees.clone().into()) - self.dense_affinity()
    }

    pub fn dense_normalized_laplacian(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&self.inv_sqrt_degrees.clone().into());
        &s * self.dense_laplacian() * &s
    }

    pub fn dense_markov(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) - self.dense_laplacian() * self.eta
    }
}

/// Nontrivial generalized eigenvectors `L a = lambda D a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenmaps {
    /// One column per component, each of unit length.
    pub vectors: Vec<Vec<f64>>,
    /// Matching eigenvalues of `L_norm`, nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// Connected components of the affinity graph.
    pub graph_components: usize,
}

impl Eigenmaps {
    /// The first two eigenvectors as coordinates.
    pub fn embedding(&self) -> Result<Embedding> {
        if self.vectors.len() < 2 {
            return Err(Error::invalid(
                "need at least two eigenvectors for a 2-D embedding",
            ));
        }
        Embedding::from_columns(&self.vectors[0], &self.vectors[1])
    }
}

/// Laplacian eigenmaps: the `n_components` smallest nontrivial solutions
/// of `L_norm b = lambda b`, returned as `a = D^-1/2 b`.
///
/// Only the trivial direction `D^1/2 1` is removed. A graph with `c`
/// components keeps `c - 1` further zero eigenvalues, whose vectors are
/// constant on each component, and a warning is logged.
pub fn laplacian_eigenmaps(a: &AffinityGraph, n_components: usize) -> Result<Eigenmaps> {
    let ops = build_operators(a, None)?;
    let n = ops.n;
    if n_components == 0 || n_components + 1 > n {
        return Err(Error::invalid(format!(
            "need 1 <= n_components < n, got {n_components} with n = {n}"
        )));
    }
    let graph_components = count_components(&ops);
    if graph_components > 1 {
        warn!(
            "affinity graph has {graph_components} connected components; \
             eigenmaps will map each component to a single point"
        );
    }
    let trivial = {
        let mut u: Vec<f64> = ops.degrees.iter().map(|d| d.sqrt()).collect();
        normalize(&mut u);
        u
    };
    let (eigenvalues, bs) = if n <= DENSE_MAX_N {
        dense_smallest(&ops, &trivial, n_components)
    } else {
        lanczos::smallest_normalized(&ops, &trivial, n_components)?
    };
    let vectors = bs
        .into_iter()
        .map(|b| {
            let mut a: Vec<f64> = b
                .iter()
                .zip(&ops.inv_sqrt_degrees)
                .map(|(x, s)| x * s)
                .collect();
            normalize(&mut a);
            orient(&mut a);
            a
        })
        .collect();
    Ok(Eigenmaps {
        vectors,
        eigenvalues,
        graph_components,
    })
}

/// Dense path: `L_norm` with the trivial eigenvalue shifted above the
/// spectrum (which lies in `[0, 2]`).
fn dense_smallest(ops: &GraphOperators, trivial: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let u = nalgebra::DVector::from_column_slice(trivial);
    let shifted = ops.dense_normalized_laplacian() + &u * u.transpose() * 3.0;
    let eig = SymmetricEigen::new(shifted);
    let mut order: Vec<usize> = (0..ops.n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = order[..k]
        .iter()
        .map(|&c| eig.eigenvalues[c].max(0.0))
        .collect();
    let vecs = order[..k]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    (vals, vecs)
}

fn count_components(ops: &GraphOperators) -> usize {
    let mut seen = vec![false; ops.n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..ops.n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for (j, _) in ops.row(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` to unit length and returns its previous norm.
pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Result of [`tsne_limit_iteration`].
#[derive(Clone, Debug, PartialEq)]
pub struct LimitIteration {
    pub embedding: Embedding,
    /// A column vanished after removing the constant direction, e.g. when
    /// the start was constant. That column is left at zero.
    pub degenerate: bool,
}

/// Iterates `Y <- M Y`, the update exaggerated t-SNE reduces to when the
/// repulsion vanishes. After every step each column is centered (removing
/// the eigenvector `1`), optionally the second column is orthogonalized
/// against the first, and both are rescaled to unit length.
pub fn tsne_limit_iteration(
    ops: &GraphOperators,
    y0: &Embedding,
    steps: usize,
    orthogonalize: bool,
) -> Result<LimitIteration> {
    if y0.n() != ops.n {
        return Err(Error::Shape {
            expected: format!("{} points", ops.n),
            got: format!("{} embedding rows", y0.n()),
        });
    }
    let mut cols = [y0.column(0), y0.column(1)];
    let mut degenerate = project(&mut cols, orthogonalize);
    for _ in 0..steps {
        if degenerate {
            break;
        }
        cols = [ops.apply_markov(&cols[0]), ops.apply_markov(&cols[1])];
        degenerate = project(&mut cols, orthogonalize);
    }
    Ok(LimitIteration {
        embedding: Embedding::from_columns(&cols[0], &cols[1])?,
        degenerate,
    })
}

/// Centers, optionally orthogonalizes, and normalizes both columns.
/// Returns whether a column vanished.
fn project(cols: &mut [Vec<f64>; 2], orthogonalize: bool) -> bool {
    let mut degenerate = false;
    for c in 0..2 {
        let before = dot(&cols[c], &cols[c]).sqrt();
        let mean = cols[c].iter().sum::<f64>() / cols[c].len() as f64;
        cols[c].iter_mut().for_each(|x| *x -= mean);
        if orthogonalize && c == 1 && !degenerate {
            let (first, second) = cols.split_at_mut(1);
            let r = dot(&first[0], &second[0]);
            second[0]
                .iter_mut()
                .zip(&first[0])
                .for_each(|(x, f)| *x -= r * f);
        }
        let norm = dot(&cols[c], &cols[c]).sqrt();
        if !(norm > 1e-12 * before) {
            cols[c].iter_mut().for_each(|x| *x = 0.0);
            degenerate = true;
        } else {
            normalize(&mut cols[c]);
        }
    }
    degenerate
}
