//! Optimizers: batch gradient descent with momentum and gains (t-SNE,
//! Barnes–Hut UMAP), a stabilized integrator for ForceAtlas2, and the
//! negative-sampling SGD loop used by UMAP.

mod batch;
mod fa2;
mod negsample;
mod trace;

pub use batch::{run_tsne, run_umap_full, UmapFullConfig};
pub use fa2::{run_fa2, Fa2Config};
pub use negsample::{repulsive_displacement, run_umap_ns, NegSampleConfig};
pub use trace::{RunTrace, TraceRecord};

use serde::{Deserialize, Serialize};

/// Runs abort once the embedding grows past this span.
pub const MAX_SPAN: f64 = 1e8;
pub const DEFAULT_RECORD_EVERY: usize = 10;

/// Exaggeration, momentum and step-size schedule for batch optimizers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_iters: usize,
    pub early_rho: f64,
    pub early_iters: usize,
    pub final_rho: f64,
    pub momentum_early: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    /// Overrides the default learning rate `n / max(rho, rho_early)`.
    pub learning_rate: Option<f64>,
    pub record_every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_iters: 750,
            early_rho: 12.0,
            early_iters: 250,
            final_rho: 1.0,
            momentum_early: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            learning_rate: None,
            record_every: DEFAULT_RECORD_EVERY,
        }
    }
}

impl Schedule {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            final_rho: rho,
            ..Self::default()
        }
    }

    /// The same schedule without the early exaggeration phase.
    pub fn without_early_phase(mut self) -> Self {
        self.early_iters = 0;
        self
    }

    /// Whether an early phase runs: only when it is nonempty and the final
    /// exaggeration is below the early one.
    pub fn has_early_phase(&self) -> bool {
        self.early_iters > 0 && self.final_rho < self.early_rho
    }

    pub fn rho_at(&self, iter: usize) -> f64 {
        if self.has_early_phase() && iter < self.early_iters {
            self.early_rho.max(self.final_rho)
        } else {
            self.final_rho
        }
    }

    pub fn momentum_at(&self, iter: usize) -> f64 {
        if iter < self.momentum_switch {
            self.momentum_early
        } else {
            self.momentum_final
        }
    }

    /// Largest exaggeration applied during the run.
    pub fn peak_rho(&self) -> f64 {
        if self.has_early_phase() {
            self.early_rho.max(self.final_rho)
        } else {
            self.final_rho
        }
    }

    /// `eta = n / max(rho, rho_early)` unless overridden.
    pub fn learning_rate(&self, n: usize) -> f64 {
        self.learning_rate.unwrap_or(n as f64 / self.peak_rho())
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        let ok = self.final_rho > 0.0
            && self.final_rho.is_finite()
            && self.early_rho > 0.0
            && (0.0..1.0).contains(&self.momentum_early)
            && (0.0..1.0).contains(&self.momentum_final)
            && self.record_every > 0
            && self.learning_rate.is_none_or(|l| l > 0.0 && l.is_finite());
        if ok {
            Ok(())
        } else {
            Err(crate::Error::invalid(format!("invalid schedule {self:?}")))
        }
    }
}
