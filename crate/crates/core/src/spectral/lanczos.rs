//! Lanczos iteration with full reorthogonalization for the smallest
//! nontrivial eigenpairs of `L_norm` on large graphs.
//!
//! Works on `S = I - L_norm / 2`, whose spectrum lies in `[0, 1]` with the
//! wanted eigenvectors at the top. Eigenvectors are found one at a time;
//! each run is kept orthogonal to the trivial vector and to all previously
//! locked vectors, which also separates repeated eigenvalues.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{dot, normalize, GraphOperators};
use crate::error::{Error, Result};

const MAX_STEPS: usize = 600;
const CHECK_EVERY: usize = 10;
const RESIDUAL_TOL: f64 = 1e-10;
const LOOSE_TOL: f64 = 1e-6;

pub(super) fn smallest_normalized(
    ops: &GraphOperators,
    trivial: &[f64],
    k: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut locked: Vec<Vec<f64>> = vec![trivial.to_vec()];
    let mut values = Vec::with_capacity(k);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c);
    for _ in 0..k {
        let (mu, v) = top_eigenpair(ops, &locked, &mut rng)?;
        values.push((2.0 * (1.0 - mu)).max(0.0));
        locked.push(v);
    }
    Ok((values, locked.split_off(1)))
}

fn apply_s(ops: &GraphOperators, x: &[f64]) -> Vec<f64> {
    ops.apply_normalized_laplacian(x)
        .iter()
        .zip(x)
        .map(|(l, xi)| xi - 0.5 * l)
        .collect()
}

/// Removes from `v` its components along every vector of `locked` and
/// `basis`. Both sets are swept in each of two passes; sweeping them
/// separately lets the small locked components of the basis vectors grow
/// from step to step.
fn orthogonalize(v: &mut [f64], locked: &[Vec<f64>], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in locked.iter().chain(basis) {
            let r = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= r * y);
        }
    }
}

fn top_eigenpair(
    ops: &GraphOperators,
    locked: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let n = ops.n();
    let max_steps = MAX_STEPS.min(n - locked.len());
    let mut q: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    orthogonalize(&mut q, locked, &[]);
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    loop {
        let j = basis.len() - 1;
        let mut w = apply_s(ops, &basis[j]);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        orthogonalize(&mut w, locked, &basis);
        let beta = dot(&w, &w).sqrt();
        let steps = basis.len();
        let exhausted = beta < 1e-14 || steps >= max_steps;
        if exhausted || steps.is_multiple_of(CHECK_EVERY) {
            let (theta, s) = ritz_top(&alphas, &betas);
            let residual = beta * s[steps - 1].abs();
            let accept = residual <= RESIDUAL_TOL || beta < 1e-14;
            if accept || (exhausted && residual <= LOOSE_TOL) {
                if !accept {
                    warn!("Lanczos stopped at {steps} steps with residual {residual:.2e}");
                }
                let mut v = vec![0.0; n];
                for (c, b) in s.iter().zip(&basis) {
                    v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
                }
                orthogonalize(&mut v, locked, &[]);
                normalize(&mut v);
                return Ok((theta, v));
            }
            if exhausted {
                return Err(Error::invalid(format!(
                    "Lanczos did not converge in {steps} steps (residual {residual:.2e})"
                )));
            }
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }
}

/// Largest eigenpair of the tridiagonal matrix with diagonal `alphas` and
/// off-diagonal `betas`.
fn ritz_top(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let top = (0..m)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap();
    (
        eig.eigenvalues[top],
        eig.eigenvectors.column(top).iter().copied().collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::binary_affinities;
    use crate::data::gen_gaussian_chain;
    use crate::knn::{build_knn, KnnAlgorithm};
    use crate::spectral::{build_operators, dense_smallest};

    #[test]
    fn matches_dense_solver() {
        let chain = gen_gaussian_chain(3, 60, 4, 3.0, 11).unwrap();
        let g = build_knn(&chain.data, 8, KnnAlgorithm::Exact)
            .unwrap()
            .symmetrize_union();
        let a = binary_affinities(&g).unwrap();
        let ops = build_operators(&a, None).unwrap();
        let mut u: Vec<f64> = ops.degrees().iter().map(|d| d.sqrt()).collect();
        normalize(&mut u);
        let (lv, lvec) = smallest_normalized(&ops, &u, 3).unwrap();
        let (dv, dvec) = dense_smallest(&ops, &u, 3);
        for c in 0..3 {
            assert!((lv[c] - dv[c]).abs() < 1e-8, "{lv:?} vs {dv:?}");
            assert!(dot(&lvec[c], &dvec[c]).abs() > 0.9999);
        }
    }
}
