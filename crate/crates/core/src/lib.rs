//! Neighbor embeddings on one attraction–repulsion spectrum.
//!
//! t-SNE (with exaggeration), UMAP (negative sampling and full gradient),
//! ForceAtlas2 and Laplacian eigenmaps share a kNN substrate, affinity
//! construction and a force framework in which every method is attraction
//! along graph edges balanced against all-pairs repulsion.

pub mod affinity;
pub mod data;
pub mod embedding;
pub mod error;
pub mod forces;
pub mod knn;
pub mod method;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod quadtree;
pub mod spectral;

pub use affinity::{AffinityGraph, AffinityKind};
pub use data::{DataMatrix, InitConfig, InitMode, ScaleRule};
pub use embedding::Embedding;
pub use error::{Error, Result};
pub use forces::{ForceField, ForceSpec};
pub use knn::{KnnAlgorithm, NeighborGraph};
pub use method::Method;
pub use metrics::MetricReport;
pub use optimize::{Fa2Config, NegSampleConfig, RunTrace, Schedule, UmapFullConfig};
pub use pipeline::{PipelineConfig, Prepared};
pub use quadtree::QuadTree;
