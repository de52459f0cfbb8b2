//! Barnes-Hut quadtree for all-pairs repulsion in two dimensions.
//!
//! A cell is approximated by a point mass at its center of mass when
//! `side / distance <= theta`, where `side` is the cell's side length. Cells
//! containing the querying point are always opened, and leaf members are
//! summed exactly, so `theta = 0` reproduces the exact kernels.

use rayon::prelude::*;

use crate::embedding::{norm2, sub, Embedding};
use crate::forces::{coincident_offset, ForceField};

pub const DEFAULT_THETA: f64 = 0.5;
pub const MAX_DEPTH: usize = 64;
const NO_CHILD: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Cell {
    pub center: [f64; 2],
    pub half: f64,
    pub com: [f64; 2],
    /// Sum of point masses (the point count for unit masses).
    pub mass: f64,
    pub count: usize,
    children: [u32; 4],
    start: usize,
    end: usize,
}

impl Cell {
    pub fn is_leaf(&self) -> bool {
        self.children.iter().all(|&c| c == NO_CHILD)
    }

    pub fn children(&self) -> impl Iterator<Item = usize> + '_ {
        self.children
            .iter()
            .filter(|&&c| c != NO_CHILD)
            .map(|&c| c as usize)
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half && (p[1] - self.center[1]).abs() <= self.half
    }
}

/// Repulsive kernels the tree can evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RepulsionKernel {
    /// t-SNE: `(n / Z) sum_j w_ij^2 (y_i - y_j)` with `Z = sum w`.
    TsneW2,
    /// UMAP: `gamma sum_j w_ij / (d_ij^2 + eps) (y_i - y_j)`.
    UmapEps { gamma: f64, epsilon: f64 },
    /// ForceAtlas2: `sum_j m_i m_j / d_ij^2 (y_i - y_j)` with the tree's
    /// point masses (degree + 1 for edge repulsion, 1 otherwise).
    InverseSquare,
}

#[derive(Clone, Debug)]
pub struct QuadTree {
    cells: Vec<Cell>,
    order: Vec<usize>,
    masses: Vec<f64>,
    positions: Vec<[f64; 2]>,
}

impl QuadTree {
    /// Builds the tree. `masses` defaults to one per point.
    pub fn build(y: &Embedding, masses: Option<&[f64]>) -> Self {
        let positions = y.coords().to_vec();
        let n = positions.len();
        let masses = masses.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
        assert_eq!(masses.len(), n, "one mass per point");
        let mut tree = Self {
            cells: Vec::with_capacity(2 * n + 1),
            order: (0..n).collect(),
            masses,
            positions,
        };
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &tree.positions {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        if n == 0 {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        // Grow slightly so boundary points are inside after rounding.
        let half = half * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        tree.build_cell(center, half, 0, n, 0);
        tree
    }

    fn build_cell(
        &mut self,
        center: [f64; 2],
        half: f64,
        start: usize,
        end: usize,
        depth: usize,
    ) -> u32 {
        let id = self.cells.len();
        let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
        for &j in &self.order[start..end] {
            let m = self.masses[j];
            mass += m;
            mx += m * self.positions[j][0];
            my += m * self.positions[j][1];
        }
        let com = if mass > 0.0 {
            [mx / mass, my / mass]
        } else if end > start {
            // All-zero masses: fall back to the plain mean.
            let k = (end - start) as f64;
            let s = self.order[start..end].iter().fold([0.0; 2], |a, &j| {
                [a[0] + self.positions[j][0], a[1] + self.positions[j][1]]
            });
            [s[0] / k, s[1] / k]
        } else {
            center
        };
        self.cells.push(Cell {
            center,
            half,
            com,
            mass,
            count: end - start,
            children: [NO_CHILD; 4],
            start,
            end,
        });

        if end - start <= 1 || depth >= MAX_DEPTH {
            return id as u32;
        }
        let first = self.positions[self.order[start]];
        if self.order[start..end]
            .iter()
            .all(|&j| self.positions[j] == first)
        {
            return id as u32;
        }

        // Partition into quadrants: index = (x >= cx) + 2 (y >= cy).
        let quadrant =
            |p: [f64; 2]| usize::from(p[0] >= center[0]) + 2 * usize::from(p[1] >= center[1]);
        let positions = &self.positions;
        self.order[start..end].sort_by_key(|&j| quadrant(positions[j]));
        let mut bounds = [start; 5];
        bounds[4] = end;
        for q in 1..4 {
            bounds[q] =
                start + self.order[start..end].partition_point(|&j| quadrant(positions[j]) < q);
        }
        let h = 0.5 * half;
        for q in 0..4 {
            if bounds[q + 1] > bounds[q] {
                let c = [
                    center[0] + if q & 1 == 1 { h } else { -h },
                    center[1] + if q & 2 == 2 { h } else { -h },
                ];
                let child = self.build_cell(c, h, bounds[q], bounds[q + 1], depth + 1);
                self.cells[id].children[q] = child;
            }
        }
        id as u32
    }

    pub fn root(&self) -> &Cell {
        &self.cells[0]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Point indices stored under `cell`.
    pub fn members(&self, cell: &Cell) -> &[usize] {
        &self.order[cell.start..cell.end]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Approximate repulsive field on every point. For `TsneW2` the field is
    /// normalized by `n / Z` and `z_sum` is set.
    pub fn repulsion(&self, kernel: RepulsionKernel, theta: f64) -> ForceField {
        assert!(theta >= 0.0, "theta must be nonnegative");
        let n = self.len();
        let per_point: Vec<([f64; 2], f64)> = (0..n)
            .into_par_iter()
            .map_init(Vec::new, |stack, i| self.query(i, kernel, theta, stack))
            .collect();
        let mut forces: Vec<[f64; 2]> = per_point.iter().map(|p| p.0).collect();
        match kernel {
            RepulsionKernel::TsneW2 => {
                let z: f64 = per_point.iter().map(|p| p.1).sum();
                let scale = if z > 0.0 { n as f64 / z } else { 0.0 };
                for f in &mut forces {
                    *f = [f[0] * scale, f[1] * scale];
                }
                ForceField {
                    forces,
                    z_sum: Some(z),
                }
            }
            _ => ForceField {
                forces,
                z_sum: None,
            },
        }
    }

    fn query(
        &self,
        i: usize,
        kernel: RepulsionKernel,
        theta: f64,
        stack: &mut Vec<u32>,
    ) -> ([f64; 2], f64) {
        let yi = self.positions[i];
        let mi = self.masses[i];
        let mut f = [0.0; 2];
        let mut z = 0.0;
        let mut add = |delta: [f64; 2], count: f64, mass: f64, f: &mut [f64; 2]| {
            let d2 = norm2(delta);
            let coef = match kernel {
                RepulsionKernel::TsneW2 => {
                    let w = 1.0 / (1.0 + d2);
                    z += count * w;
                    count * w * w
                }
                RepulsionKernel::UmapEps { gamma, epsilon } => {
                    if d2 == 0.0 {
                        0.0
                    } else {
                        gamma * count / ((1.0 + d2) * (d2 + epsilon))
                    }
                }
                RepulsionKernel::InverseSquare => mi * mass / d2,
            };
            f[0] += coef * delta[0];
            f[1] += coef * delta[1];
        };

        stack.clear();
        stack.push(0);
        while let Some(c) = stack.pop() {
            let cell = &self.cells[c as usize];
            if cell.count == 0 {
                continue;
            }
            if cell.is_leaf() {
                for &j in self.members(cell) {
                    if j == i {
                        continue;
                    }
                    let mut delta = sub(yi, self.positions[j]);
                    if kernel == RepulsionKernel::InverseSquare && norm2(delta) == 0.0 {
                        delta = coincident_offset(i, j);
                    }
                    add(delta, 1.0, self.masses[j], &mut f);
                }
                continue;
            }
            let delta = sub(yi, cell.com);
            let side = 2.0 * cell.half;
            if !cell.contains(yi) && side * side <= theta * theta * norm2(delta) {
                add(delta, cell.count as f64, cell.mass, &mut f);
            } else {
                stack.extend(cell.children.iter().filter(|&&ch| ch != NO_CHILD));
            }
        }
        (f, z)
    }
}
