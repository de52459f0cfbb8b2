use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::Result;

/// One recorded optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `Z = sum_{k != l} w_kl`, when the method evaluates it.
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    /// The realized t-SNE repulsion coefficient `n / (rho Z)`.
    #[serde(rename = "n_over_rhoZ")]
    pub n_over_rho_z: Option<f64>,
    pub span_x: f64,
    pub span_y: f64,
    /// Mean per-point gradient norm.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: String,
    pub n: usize,
    pub records: Vec<TraceRecord>,
    /// Iterations (or epochs) actually performed.
    pub iterations: usize,
    /// Set by optimizers with a stopping rule.
    pub converged: Option<bool>,
}

impl RunTrace {
    pub(crate) fn new(method: &str, n: usize) -> Self {
        Self {
            method: method.to_string(),
            n,
            ..Self::default()
        }
    }

    pub(crate) fn record(
        &mut self,
        iter: usize,
        y: &Embedding,
        z: Option<f64>,
        rho: f64,
        grad_norm: f64,
    ) {
        let [span_x, span_y] = y.axis_spans();
        self.records.push(TraceRecord {
            iter,
            z,
            n_over_rho_z: z.map(|z| self.n as f64 / (rho * z)),
            span_x,
            span_y,
            grad_norm,
        });
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Final `Z / n`, if recorded.
    pub fn final_z_over_n(&self) -> Option<f64> {
        self.last().and_then(|r| r.z).map(|z| z / self.n as f64)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_uses_checkpoint_keys() {
        let mut t = RunTrace::new("tsne", 4);
        let y = Embedding::new(vec![[0.0, 0.0], [1.0, 2.0], [0.5, 0.5], [0.0, 1.0]]).unwrap();
        t.record(10, &y, Some(8.0), 2.0, 0.25);
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"Z\":8.0"));
        assert!(s.contains("\"n_over_rhoZ\":0.25"));
        assert!(s.contains("\"span_y\":2.0"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.json");
        t.write_json(&p).unwrap();
        assert_eq!(RunTrace::read_json(&p).unwrap(), t);
        assert_eq!(t.final_z_over_n(), Some(2.0));
    }
}
