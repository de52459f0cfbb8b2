use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DataMatrix;
use crate::error::{Error, Result};

/// Points drawn from a chain of unit-variance isotropic Gaussians placed at
/// `(c * spacing, 0, ..., 0)`, `c = 0..n_clusters`.
#[derive(Clone, Debug)]
pub struct GaussianChain {
    pub data: DataMatrix,
    /// Cluster index of every row.
    pub labels: Vec<usize>,
}

/// Generates the Gaussian chain.
///
/// Each cluster draws from its own ChaCha8 stream (`stream = cluster index`)
/// of a generator seeded with `seed`, so clusters are reproducible
/// independently of each other and of `per_cluster`.
pub fn gen_gaussian_chain(
    n_clusters: usize,
    per_cluster: usize,
    dim: usize,
    spacing: f64,
    seed: u64,
) -> Result<GaussianChain> {
    if n_clusters == 0 || per_cluster == 0 || dim == 0 {
        return Err(Error::invalid(
            "cluster count, cluster size and dimension must be positive",
        ));
    }
    if !(spacing >= 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!(
            "spacing must be finite and >= 0, got {spacing}"
        )));
    }
    let n = n_clusters * per_cluster;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..n_clusters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        for _ in 0..per_cluster {
            for d in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(if d == 0 { z + c as f64 * spacing } else { z });
            }
            labels.push(c);
        }
    }
    // A single cluster of one point is not a valid DataMatrix; surface that
    // through the usual constructor error.
    Ok(GaussianChain {
        data: DataMatrix::new(n, dim, values)?,
        labels,
    })
}
