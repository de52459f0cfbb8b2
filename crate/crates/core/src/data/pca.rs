use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DataMatrix;
use crate::error::{Error, Result};

/// Feature counts above this use subspace iteration instead of a dense
/// covariance eigendecomposition.
const DENSE_COVARIANCE_MAX_DIM: usize = 2000;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Pca {
    /// `n x d` projections onto the principal axes.
    pub scores: DataMatrix,
    /// Variance explained by each returned axis, decreasing.
    pub explained_variance: Vec<f64>,
    /// Unit-length principal axes (`d` vectors of length `dim`).
    pub components: Vec<Vec<f64>>,
    /// Set when fewer than `d` axes carry nonzero variance; the missing
    /// components are all-zero.
    pub rank_deficient: bool,
}

/// Projects mean-centered `x` onto its top-`d` principal axes.
///
/// Each axis is oriented so that its largest-magnitude loading is positive.
pub fn pca_reduce(x: &DataMatrix, d: usize) -> Result<Pca> {
    let (n, dim) = (x.n(), x.dim());
    if d == 0 || d > n.min(dim) {
        return Err(Error::invalid(format!(
            "PCA dimension {d} must be in 1..={}",
            n.min(dim)
        )));
    }

    let mut means = vec![0.0; dim];
    for row in x.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| x.row(i)[j] - means[j]);

    let (mut eigvals, mut axes) = if dim <= DENSE_COVARIANCE_MAX_DIM {
        dense_axes(&centered, d)
    } else {
        subspace_axes(&centered, d)
    };

    let top = eigvals.first().copied().unwrap_or(0.0).max(0.0);
    let mut rank_deficient = false;
    for (lam, axis) in eigvals.iter_mut().zip(axes.iter_mut()) {
        if *lam <= RANK_TOL * top || top == 0.0 {
            *lam = 0.0;
            axis.iter_mut().for_each(|v| *v = 0.0);
            rank_deficient = true;
        } else {
            orient(axis);
        }
    }
    if rank_deficient {
        log::warn!("pca_reduce: input has fewer than {d} nonzero singular values; padding with zero components");
    }

    let mut scores = Vec::with_capacity(n * d);
    for i in 0..n {
        for axis in &axes {
            scores.push((0..dim).map(|j| centered[(i, j)] * axis[j]).sum());
        }
    }

    Ok(Pca {
        scores: DataMatrix::new(n, d, scores)?,
        explained_variance: eigvals,
        components: axes,
        rank_deficient,
    })
}

fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let denom = (centered.nrows() - 1).max(1) as f64;
    (centered.transpose() * centered) / denom
}

fn dense_axes(centered: &DMatrix<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(covariance(centered));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = order[..d]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Randomized subspace iteration on `X^T X` followed by Rayleigh-Ritz.
fn subspace_axes(centered: &DMatrix<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = centered.ncols();
    let width = (d + 10).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
    let mut q = DMatrix::from_fn(dim, width, |_, _| StandardNormal.sample(&mut rng));
    for _ in 0..12 {
        let y = centered.transpose() * (centered * &q);
        q = y.qr().q();
    }
    let denom = (centered.nrows() - 1).max(1) as f64;
    let xq = centered * &q;
    let small = (xq.transpose() * &xq) / denom;
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..d].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = order[..d]
        .iter()
        .map(|&k| (&q * eig.eigenvectors.column(k)).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Flips `v` so its largest-magnitude entry is positive.
pub(crate) fn orient(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(
        0.0_f64,
        |best, x| if x.abs() > best.abs() { x } else { best },
    );
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
