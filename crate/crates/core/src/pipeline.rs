//! End-to-end embedding runs: graph construction, affinities,
//! initialization and the method's optimizer.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{binary_affinities, perplexity_calibrate, AffinityGraph, AffinityKind};
use crate::data::{make_init, DataMatrix, InitConfig, InitMode, ScaleRule};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::forces::{DEFAULT_EPSILON, DEFAULT_GAMMA};
use crate::knn::{build_knn, KnnAlgorithm, NeighborGraph};
use crate::method::Method;
use crate::metrics::{distance_correlation, knn_recall};
use crate::optimize::{
    run_fa2, run_tsne, run_umap_full, run_umap_ns, Fa2Config, NegSampleConfig, RunTrace, Schedule,
    UmapFullConfig,
};
use crate::quadtree::DEFAULT_THETA;
use crate::spectral::laplacian_eigenmaps;

pub const DEFAULT_PERPLEXITY: f64 = 30.0;
/// Neighbors for binary affinities, FA2 and Laplacian eigenmaps.
pub const DEFAULT_GRAPH_K: usize = 15;

/// Every knob of a run. Fields left `None` take the method's default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    pub perplexity: f64,
    /// Neighbors per point: `3 * perplexity` for Gaussian affinities,
    /// 15 otherwise.
    pub k: Option<usize>,
    /// Gaussian for t-SNE, binary for the other methods.
    pub affinity: Option<AffinityKind>,
    pub knn_algorithm: KnnAlgorithm,
    pub rho: f64,
    pub early_exaggeration: bool,
    /// Overrides the batch optimizers' default step size.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Iterations (epochs for negative sampling). 750 by default; FA2 uses
    /// it as an iteration cap.
    pub iters: Option<usize>,
    pub gamma: f64,
    pub epsilon: f64,
    pub nu: usize,
    pub theta: f64,
    pub edge_repulsion: bool,
    pub init: InitMode,
    pub init_scale: Option<ScaleRule>,
    pub components: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            perplexity: DEFAULT_PERPLEXITY,
            k: None,
            affinity: None,
            knn_algorithm: KnnAlgorithm::Auto,
            rho: 1.0,
            early_exaggeration: true,
            learning_rate: None,
            iters: None,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            nu: 5,
            theta: DEFAULT_THETA,
            edge_repulsion: true,
            init: InitMode::Pca,
            init_scale: None,
            components: 2,
            seed: 0,
        }
    }

    pub fn affinity_kind(&self) -> AffinityKind {
        self.affinity.unwrap_or(match self.method {
            Method::Tsne => AffinityKind::GaussianPerplexity,
            _ => AffinityKind::BinaryKnn,
        })
    }

    pub fn neighbors(&self) -> usize {
        self.k.unwrap_or(match self.affinity_kind() {
            AffinityKind::GaussianPerplexity => (3.0 * self.perplexity).ceil() as usize,
            AffinityKind::BinaryKnn => DEFAULT_GRAPH_K,
        })
    }

    fn iters(&self) -> usize {
        self.iters.unwrap_or(750)
    }

    pub fn schedule(&self) -> Schedule {
        let s = Schedule {
            total_iters: self.iters(),
            learning_rate: self.learning_rate,
            ..Schedule::with_rho(self.rho)
        };
        if self.early_exaggeration {
            s
        } else {
            s.without_early_phase()
        }
    }

    pub fn init_config(&self) -> Option<InitConfig> {
        InitConfig::for_method(self.method, self.seed).map(|c| InitConfig {
            mode: self.init.clone(),
            scale: self.init_scale.or(c.scale),
            seed: self.seed,
        })
    }
}

/// Graphs shared by every method run on the same data.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Directed kNN graph.
    pub knn: NeighborGraph,
    /// Its symmetrized union `A v A^T`.
    pub graph: NeighborGraph,
    pub affinities: AffinityGraph,
}

pub fn prepare(x: &DataMatrix, cfg: &PipelineConfig) -> Result<Prepared> {
    let kind = cfg.affinity_kind();
    if kind == AffinityKind::GaussianPerplexity && cfg.method != Method::Tsne {
        return Err(Error::invalid(format!(
            "{} runs on binary kNN affinities",
            cfg.method
        )));
    }
    let knn = build_knn(x, cfg.neighbors(), cfg.knn_algorithm)?;
    let graph = knn.symmetrize_union();
    let affinities = match kind {
        AffinityKind::GaussianPerplexity => perplexity_calibrate(&knn, cfg.perplexity)?,
        AffinityKind::BinaryKnn => binary_affinities(&graph)?,
    };
    Ok(Prepared {
        knn,
        graph,
        affinities,
    })
}

#[derive(Clone, Debug)]
pub struct EmbedOutput {
    pub embedding: Embedding,
    pub trace: Option<RunTrace>,
    /// Laplacian eigenvalues, for spectral runs.
    pub eigenvalues: Option<Vec<f64>>,
}

pub fn embed(x: &DataMatrix, cfg: &PipelineConfig) -> Result<(Prepared, EmbedOutput)> {
    let prepared = prepare(x, cfg)?;
    let out = embed_prepared(x, &prepared, cfg)?;
    Ok((prepared, out))
}

pub fn embed_prepared(
    x: &DataMatrix,
    prepared: &Prepared,
    cfg: &PipelineConfig,
) -> Result<EmbedOutput> {
    let init = match cfg.init_config() {
        Some(c) => Some(make_init(x, &c)?),
        None => None,
    };
    let a = &prepared.affinities;
    let (embedding, trace) = match cfg.method {
        Method::Tsne => run_tsne(a, init.as_ref().unwrap(), &cfg.schedule(), cfg.theta)?,
        Method::UmapBh => {
            let full = UmapFullConfig {
                gamma: cfg.gamma,
                epsilon: cfg.epsilon,
                theta: cfg.theta,
                schedule: Schedule {
                    total_iters: cfg.iters(),
                    learning_rate: cfg.learning_rate,
                    ..UmapFullConfig::default_schedule()
                },
                warm_start: None,
            };
            run_umap_full(a, init.as_ref().unwrap(), &full)?
        }
        Method::UmapNs => {
            let ns = NegSampleConfig {
                nu: cfg.nu,
                gamma: cfg.gamma,
                epsilon: cfg.epsilon,
                epochs: cfg.iters(),
                ..NegSampleConfig::default()
            };
            run_umap_ns(a, init.as_ref().unwrap(), &ns, cfg.seed)?
        }
        Method::Fa2 => {
            let fa2 = Fa2Config {
                edge_repulsion: cfg.edge_repulsion,
                max_iters: cfg.iters.unwrap_or(Fa2Config::default().max_iters),
                theta: cfg.theta,
                ..Fa2Config::default()
            };
            run_fa2(
                &prepared.graph,
                &prepared.graph.degrees(),
                init.as_ref().unwrap(),
                &fa2,
            )?
        }
        Method::Le => {
            let maps = laplacian_eigenmaps(a, cfg.components.max(2))?;
            return Ok(EmbedOutput {
                embedding: maps.embedding()?,
                trace: None,
                eigenvalues: Some(maps.eigenvalues),
            });
        }
    };
    Ok(EmbedOutput {
        embedding,
        trace: Some(trace),
        eigenvalues: None,
    })
}

/// Default exaggeration grid: 50 values log-spaced over `[1, 100]` with
/// `4` and `30` inserted, ascending.
pub fn default_rho_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..50).map(|k| 10f64.powf(2.0 * k as f64 / 49.0)).collect();
    grid.extend([4.0, 30.0]);
    grid.sort_by(f64::total_cmp);
    grid
}

/// One grid point of an exaggeration sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    /// Distance correlation with the reference layout, when one is given.
    pub dcor: Option<f64>,
    pub recall: f64,
    pub final_z_over_n: Option<f64>,
    pub span: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub recall_k: usize,
    pub recall_samples: usize,
    pub dcor_samples: usize,
    pub seed: u64,
}

impl Default for SweepMetrics {
    fn default() -> Self {
        Self {
            recall_k: 15,
            recall_samples: 10_000,
            dcor_samples: 5_000,
            seed: 0,
        }
    }
}

/// Runs t-SNE at every `rho` in `grid` on shared graphs, in parallel, and
/// scores each layout. Recall is measured against `prepared.affinities`.
pub fn rho_sweep(
    x: &DataMatrix,
    prepared: &Prepared,
    cfg: &PipelineConfig,
    grid: &[f64],
    reference: Option<&Embedding>,
    metrics: &SweepMetrics,
) -> Result<Vec<SweepRow>> {
    if cfg.method != Method::Tsne {
        return Err(Error::invalid("exaggeration sweeps run t-SNE"));
    }
    grid.par_iter()
        .map(|&rho| {
            let run = PipelineConfig { rho, ..cfg.clone() };
            let out = embed_prepared(x, prepared, &run)?;
            let y = &out.embedding;
            let dcor = match reference {
                Some(r) => {
                    Some(distance_correlation(y, r, metrics.dcor_samples, metrics.seed)?.value)
                }
                None => None,
            };
            let recall = knn_recall(
                &prepared.affinities,
                y,
                metrics.recall_k,
                metrics.recall_samples,
                metrics.seed,
            )?;
            info!("rho {rho}: recall {:.4}, dcor {dcor:?}", recall.value);
            Ok(SweepRow {
                rho,
                dcor,
                recall: recall.value,
                final_z_over_n: out.trace.as_ref().and_then(RunTrace::final_z_over_n),
                span: y.span(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian_chain;

    #[test]
    fn method_defaults() {
        let t = PipelineConfig::new(Method::Tsne);
        assert_eq!(t.neighbors(), 90);
        assert_eq!(t.affinity_kind(), AffinityKind::GaussianPerplexity);
        let u = PipelineConfig::new(Method::UmapNs);
        assert_eq!(u.neighbors(), 15);
        assert_eq!(
            u.init_config().unwrap().scale,
            Some(ScaleRule::Range(-10.0, 10.0))
        );
        assert!(PipelineConfig::new(Method::Le).init_config().is_none());
    }

    #[test]
    fn every_method_runs() {
        let x = gen_gaussian_chain(3, 30, 6, 5.0, 2).unwrap().data;
        for m in Method::ALL {
            let mut cfg = PipelineConfig::new(m);
            cfg.perplexity = 5.0;
            cfg.iters = Some(30);
            let (_, out) = embed(&x, &cfg).unwrap();
            assert_eq!(out.embedding.n(), 90);
            assert_eq!(out.trace.is_some(), m != Method::Le, "{m}");
        }
    }

    #[test]
    fn gaussian_affinities_only_for_tsne() {
        let x = gen_gaussian_chain(1, 40, 3, 0.0, 2).unwrap().data;
        let mut cfg = PipelineConfig::new(Method::Fa2);
        cfg.affinity = Some(AffinityKind::GaussianPerplexity);
        assert!(prepare(&x, &cfg).is_err());
    }

    #[test]
    fn default_grid_has_52_points() {
        let g = default_rho_grid();
        assert_eq!(g.len(), 52);
        assert_eq!((g[0], g[51]), (1.0, 100.0));
        assert!(g.contains(&4.0) && g.contains(&30.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_point_sweep_against_itself() {
        let x = gen_gaussian_chain(2, 40, 4, 5.0, 3).unwrap().data;
        let mut cfg = PipelineConfig::new(Method::Tsne);
        cfg.perplexity = 5.0;
        cfg.iters = Some(100);
        let (prepared, out) = embed(&x, &cfg).unwrap();
        let rows = rho_sweep(
            &x,
            &prepared,
            &cfg,
            &[1.0],
            Some(&out.embedding),
            &SweepMetrics::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].dcor, Some(1.0));
    }
}
