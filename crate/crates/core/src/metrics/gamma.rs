//! Matching full-gradient UMAP to negative-sampling UMAP by embedding size.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loglog_slope;
use crate::affinity::{binary_affinities, AffinityGraph};
use crate::data::{make_init, DataMatrix, InitConfig};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::knn::{build_knn, KnnAlgorithm};
use crate::method::Method;
use crate::optimize::{run_umap_full, run_umap_ns, NegSampleConfig, UmapFullConfig};

/// The run whose span is matched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    NegativeSampling(NegSampleConfig),
    /// Full-gradient UMAP at a known `gamma`; used to validate the matcher.
    FullGradient {
        gamma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaProtocol {
    pub k: usize,
    pub reference: Reference,
    /// Template for the grid runs; its `gamma` is replaced per grid value.
    pub full: UmapFullConfig,
    pub seed: u64,
}

impl Default for GammaProtocol {
    fn default() -> Self {
        Self {
            k: 15,
            reference: Reference::NegativeSampling(NegSampleConfig::default()),
            full: UmapFullConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub n: usize,
    pub reference_span: Option<f64>,
    /// Grid value whose span is closest to the reference span.
    pub gamma_hat: Option<f64>,
    /// Final span of each grid run (`None` where it diverged).
    pub grid_spans: Vec<Option<f64>>,
    /// Set when the reference run diverged and the size was skipped.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub sizes: Vec<SizeEstimate>,
    /// Log-log regression slope of `gamma_hat` on `n`; needs two sizes.
    pub slope: Option<f64>,
}

/// `log`-spaced grid of `count` values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn validate(x: &DataMatrix, sizes: &[usize], grid: &[f64], protocol: &GammaProtocol) -> Result<()> {
    if sizes.is_empty() || grid.is_empty() {
        return Err(Error::invalid("need at least one size and one grid value"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sizes must be strictly ascending"));
    }
    if sizes[0] <= protocol.k + 1 || *sizes.last().unwrap() > x.n() {
        return Err(Error::invalid(format!(
            "sizes must lie in ({}, {}]",
            protocol.k + 1,
            x.n()
        )));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::invalid("gamma grid values must be positive"));
    }
    let asc = grid.windows(2).all(|w| w[0] < w[1]);
    let desc = grid.windows(2).all(|w| w[0] > w[1]);
    if !(asc || desc) {
        return Err(Error::invalid("gamma grid must be monotone"));
    }
    Ok(())
}

/// For every size, embeds a random subset with the reference optimizer and
/// with full-gradient UMAP at each grid `gamma`, and picks the grid value
/// whose final span is closest to the reference span. Subsets are nested
/// prefixes of one seeded permutation.
pub fn estimate_effective_gamma(
    x: &DataMatrix,
    sizes: &[usize],
    gamma_grid: &[f64],
    protocol: &GammaProtocol,
) -> Result<GammaEstimate> {
    validate(x, sizes, gamma_grid, protocol)?;
    let mut perm: Vec<usize> = (0..x.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(protocol.seed));

    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut rows = perm[..n].to_vec();
        rows.sort_unstable();
        let sub = x.select(&rows)?;
        let a = graph_for(&sub, protocol.k)?;
        let init_cfg =
            InitConfig::for_method(Method::UmapNs, protocol.seed).expect("UMAP has an init");
        let y0 = make_init(&sub, &init_cfg)?;

        let reference = match &protocol.reference {
            Reference::NegativeSampling(cfg) => {
                run_umap_ns(&a, &y0, cfg, protocol.seed).map(|r| r.0)
            }
            Reference::FullGradient { gamma } => full_run(&a, &y0, &protocol.full, *gamma),
        };
        let reference_span = match reference {
            Ok(y) => y.span(),
            Err(e) => {
                warn!("reference run at n = {n} failed: {e}; skipping this size");
                out.push(SizeEstimate {
                    n,
                    reference_span: None,
                    gamma_hat: None,
                    grid_spans: Vec::new(),
                    skipped: true,
                });
                continue;
            }
        };
        let grid_spans: Vec<Option<f64>> = gamma_grid
            .iter()
            .map(|&g| full_run(&a, &y0, &protocol.full, g).ok().map(|y| y.span()))
            .collect();
        let gamma_hat = gamma_grid
            .iter()
            .zip(&grid_spans)
            .filter_map(|(&g, s)| s.map(|s| (g, (s - reference_span).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(g, _)| g);
        info!("n = {n}: reference span {reference_span:.4}, gamma_hat {gamma_hat:?}");
        out.push(SizeEstimate {
            n,
            reference_span: Some(reference_span),
            gamma_hat,
            grid_spans,
            skipped: false,
        });
    }
    let (ns, gs): (Vec<f64>, Vec<f64>) = out
        .iter()
        .filter_map(|s| s.gamma_hat.map(|g| (s.n as f64, g)))
        .unzip();
    Ok(GammaEstimate {
        slope: loglog_slope(&ns, &gs),
        sizes: out,
    })
}

fn graph_for(x: &DataMatrix, k: usize) -> Result<AffinityGraph> {
    binary_affinities(&build_knn(x, k, KnnAlgorithm::Auto)?.symmetrize_union())
}

fn full_run(
    a: &AffinityGraph,
    y0: &Embedding,
    template: &UmapFullConfig,
    gamma: f64,
) -> Result<Embedding> {
    let cfg = UmapFullConfig {
        gamma,
        ..template.clone()
    };
    run_umap_full(a, y0, &cfg).map(|r| r.0)
}
