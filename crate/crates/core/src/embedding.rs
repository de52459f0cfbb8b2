//! Two-dimensional embedding coordinates shared by every method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x 2` layout. Row `i` is the position `y_i` of input point `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    coords: Vec<[f64; 2]>,
}

impl Embedding {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = coords
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::invalid(format!(
                "embedding coordinate {i} is not finite"
            )));
        }
        Ok(Self { coords })
    }

    /// Builds an embedding without the finiteness check. Used by optimizers
    /// that detect divergence themselves.
    pub(crate) fn from_raw(coords: Vec<[f64; 2]>) -> Self {
        Self { coords }
    }

    pub fn from_columns(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape {
                expected: format!("{} rows", x.len()),
                got: format!("{} rows", y.len()),
            });
        }
        Self::new(x.iter().zip(y).map(|(&a, &b)| [a, b]).collect())
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<[f64; 2]> {
        self.coords
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.coords.iter().map(|p| p[c]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coords
            .iter()
            .all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// Returns a copy with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|p| [p[0] * s, p[1] * s]).collect(),
        }
    }

    pub fn translated(&self, t: [f64; 2]) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1]])
                .collect(),
        }
    }

    /// Restricts the embedding to the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            coords: rows.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    /// `max - min` over both coordinates pooled together.
    pub fn span(&self) -> f64 {
        let (lo, hi) = self
            .coords
            .iter()
            .flat_map(|p| p.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if self.coords.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Per-axis `max - min`.
    pub fn axis_spans(&self) -> [f64; 2] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.coords {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        if self.coords.is_empty() {
            [0.0; 2]
        } else {
            [hi[0] - lo[0], hi[1] - lo[1]]
        }
    }
}

#[inline]
pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn norm2(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}
