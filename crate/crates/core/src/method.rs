use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The embedding algorithms the engine can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// t-SNE with optional exaggeration.
    Tsne,
    /// UMAP optimized with negative sampling (the reference UMAP scheme).
    UmapNs,
    /// UMAP loss optimized with the full Barnes-Hut gradient.
    UmapBh,
    /// ForceAtlas2 with linear attraction and inverse-distance repulsion.
    Fa2,
    /// Laplacian eigenmaps.
    Le,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Tsne,
        Method::UmapNs,
        Method::UmapBh,
        Method::Fa2,
        Method::Le,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tsne => "tsne",
            Method::UmapNs => "umap-ns",
            Method::UmapBh => "umap-bh",
            Method::Fa2 => "fa2",
            Method::Le => "le",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method `{s}` (expected tsne, umap-ns, umap-bh, fa2 or le)"
                ))
            })
    }
}
