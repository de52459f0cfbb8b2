//! Input data: the dense matrix type, synthetic generators, PCA, embedding
//! initialization and file formats.

mod init;
mod io;
mod pca;
mod synth;

pub use init::{make_init, pooled_std, InitConfig, InitMode, ScaleRule};
pub use io::{
    load_idx_many, load_labels, load_matrix, read_raw_f32, write_csv, write_embedding_csv,
    write_raw_f32, Format,
};
pub(crate) use pca::orient;
pub use pca::{pca_reduce, Pca};
pub use synth::{gen_gaussian_chain, GaussianChain};

use crate::error::{Error, Result};

/// Dense `n x dim` matrix of high-dimensional points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 points, got {n}")));
        }
        if dim < 1 {
            return Err(Error::invalid("need at least one feature"));
        }
        if values.len() != n * dim {
            return Err(Error::Shape {
                expected: format!("{n}x{dim} = {} values", n * dim),
                got: format!("{} values", values.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { n, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::invalid(format!(
                "ragged row {i}: expected {dim} columns"
            )));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Keeps the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self::new(rows.len(), self.dim, values)
    }

    /// Squared Euclidean distance between rows `i` and `j`.
    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
