//! Attractive and repulsive gradient fields.
//!
//! Every method shares the same shape: an attraction summed over graph
//! edges and a repulsion summed over all pairs. Fields are gradients, so an
//! optimizer moves each point along `-field`.
//!
//! Exaggeration is applied as `1 / rho` on the t-SNE repulsion rather than
//! `rho` on the attraction. The two differ only by a global factor `rho`,
//! which the optimizer's step rule (`eta = n / max(rho, rho_early)`) folds
//! back in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::embedding::{norm2, sub, Embedding};
use crate::error::{Error, Result};
use crate::knn::NeighborGraph;
use crate::quadtree::{QuadTree, RepulsionKernel};

/// UMAP's denominator smoothing.
pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Magnitude of the displacement assigned to coincident FA2 pairs.
pub const COINCIDENT_JITTER: f64 = 1e-9;

/// Per-point gradient vectors, plus `Z = sum_{k != l} w_kl` when the
/// t-SNE repulsion was evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceField {
    pub forces: Vec<[f64; 2]>,
    pub z_sum: Option<f64>,
}

impl ForceField {
    pub fn zeros(n: usize) -> Self {
        Self {
            forces: vec![[0.0; 2]; n],
            z_sum: None,
        }
    }

    pub fn n(&self) -> usize {
        self.forces.len()
    }

    /// `sum_i |f_i|_1`.
    pub fn l1_norm(&self) -> f64 {
        self.forces.iter().map(|f| f[0].abs() + f[1].abs()).sum()
    }

    /// `sum_i f_i`, which vanishes for translation-invariant kernels.
    pub fn total(&self) -> [f64; 2] {
        self.forces
            .iter()
            .fold([0.0; 2], |a, f| [a[0] + f[0], a[1] + f[1]])
    }

    pub fn mean_norm(&self) -> f64 {
        if self.forces.is_empty() {
            return 0.0;
        }
        self.forces.iter().map(|f| norm2(*f).sqrt()).sum::<f64>() / self.n() as f64
    }

    /// `self + scale * other`, keeping `self.z_sum` unless it is unset.
    pub fn add_scaled(mut self, other: &ForceField, scale: f64) -> Self {
        for (f, g) in self.forces.iter_mut().zip(&other.forces) {
            f[0] += scale * g[0];
            f[1] += scale * g[1];
        }
        self.z_sum = self.z_sum.or(other.z_sum);
        self
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        for f in &mut self.forces {
            *f = [f[0] * scale, f[1] * scale];
        }
        self
    }

    pub fn all_finite(&self) -> bool {
        self.forces
            .iter()
            .all(|f| f[0].is_finite() && f[1].is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttractionKernel {
    /// `v_ij w_ij (y_i - y_j)` with `w = 1 / (1 + d^2)`.
    Cauchy,
    /// `v_ij (y_i - y_j)`.
    Linear,
}

fn check_sizes(expected: usize, y: &Embedding) -> Result<()> {
    if expected != y.n() {
        return Err(Error::Shape {
            expected: format!("{expected} points"),
            got: format!("{} embedding rows", y.n()),
        });
    }
    Ok(())
}

pub fn attraction(
    a: &AffinityGraph,
    y: &Embedding,
    kernel: AttractionKernel,
) -> Result<ForceField> {
    check_sizes(a.n(), y)?;
    let coords = y.coords();
    let forces = (0..a.n())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; 2];
            for (j, v) in a.row(i) {
                let d = sub(coords[i], coords[j]);
                let c = match kernel {
                    AttractionKernel::Cauchy => v / (1.0 + norm2(d)),
                    AttractionKernel::Linear => v,
                };
                f[0] += c * d[0];
                f[1] += c * d[1];
            }
            f
        })
        .collect();
    Ok(ForceField {
        forces,
        z_sum: None,
    })
}

/// Exact t-SNE repulsion `(n / Z) sum_j w_ij^2 (y_i - y_j)`.
pub fn tsne_repulsion_exact(y: &Embedding) -> ForceField {
    let coords = y.coords();
    let n = coords.len();
    let per_point: Vec<([f64; 2], f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; 2];
            let mut z = 0.0;
            for (j, &yj) in coords.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = sub(coords[i], yj);
                let w = 1.0 / (1.0 + norm2(d));
                z += w;
                f[0] += w * w * d[0];
                f[1] += w * w * d[1];
            }
            (f, z)
        })
        .collect();
    let z: f64 = per_point.iter().map(|p| p.1).sum();
    let scale = if z > 0.0 { n as f64 / z } else { 0.0 };
    ForceField {
        forces: per_point
            .iter()
            .map(|p| [p.0[0] * scale, p.0[1] * scale])
            .collect(),
        z_sum: Some(z),
    }
}

/// Exact UMAP repulsion `gamma sum_j w_ij / (d_ij^2 + eps) (y_i - y_j)`.
pub fn umap_repulsion_exact(y: &Embedding, gamma: f64, epsilon: f64) -> Result<ForceField> {
    if !(gamma > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "need gamma > 0 and epsilon >= 0, got {gamma}, {epsilon}"
        )));
    }
    let coords = y.coords();
    if epsilon == 0.0 && has_coincident_pair(coords) {
        return Err(Error::invalid(
            "epsilon = 0 with coincident points divides by zero",
        ));
    }
    let forces = (0..coords.len())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; 2];
            for (j, &yj) in coords.iter().enumerate() {
                let d = sub(coords[i], yj);
                let d2 = norm2(d);
                if j == i || d2 == 0.0 {
                    continue;
                }
                let c = gamma / ((1.0 + d2) * (d2 + epsilon));
                f[0] += c * d[0];
                f[1] += c * d[1];
            }
            f
        })
        .collect();
    Ok(ForceField {
        forces,
        z_sum: None,
    })
}

fn has_coincident_pair(coords: &[[f64; 2]]) -> bool {
    let mut sorted: Vec<[f64; 2]> = coords.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Deterministic displacement for a coincident pair, antisymmetric in
/// `(i, j)` so that the pair's forces still cancel.
pub(crate) fn coincident_offset(i: usize, j: usize) -> [f64; 2] {
    let (a, b) = (i.min(j) as u64, i.max(j) as u64);
    let mut h = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0xD1B5_4A32_D192_ED03);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 29;
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let sign = if i < j { 1.0 } else { -1.0 };
    [
        sign * COINCIDENT_JITTER * angle.cos(),
        sign * COINCIDENT_JITTER * angle.sin(),
    ]
}

/// Repulsion weights for FA2: `h_i + 1` with edge repulsion, else 1.
pub fn fa2_masses(degrees: &[usize], edge_repulsion: bool) -> Vec<f64> {
    degrees
        .iter()
        .map(|&h| if edge_repulsion { h as f64 + 1.0 } else { 1.0 })
        .collect()
}

/// ForceAtlas2 linear attraction along graph edges.
pub fn fa2_attraction(g: &NeighborGraph, y: &Embedding) -> Result<ForceField> {
    check_sizes(g.n(), y)?;
    let coords = y.coords();
    let forces = (0..g.n())
        .into_par_iter()
        .map(|i| {
            g.neighbors(i).iter().fold([0.0; 2], |f, &j| {
                let d = sub(coords[i], coords[j]);
                [f[0] + d[0], f[1] + d[1]]
            })
        })
        .collect();
    Ok(ForceField {
        forces,
        z_sum: None,
    })
}

/// Exact ForceAtlas2 repulsion `sum_j c_ij / d_ij^2 (y_i - y_j)`.
pub fn fa2_repulsion_exact(masses: &[f64], y: &Embedding) -> Result<ForceField> {
    check_sizes(masses.len(), y)?;
    let coords = y.coords();
    let forces = (0..coords.len())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; 2];
            for (j, &yj) in coords.iter().enumerate() {
                if j == i {
                    continue;
                }
                let mut d = sub(coords[i], yj);
                if norm2(d) == 0.0 {
                    d = coincident_offset(i, j);
                }
                let c = masses[i] * masses[j] / norm2(d);
                f[0] += c * d[0];
                f[1] += c * d[1];
            }
            f
        })
        .collect();
    Ok(ForceField {
        forces,
        z_sum: None,
    })
}

/// The full ForceAtlas2 field: attraction minus (edge-)repulsion.
pub fn fa2_forces(
    g: &NeighborGraph,
    degrees: &[usize],
    y: &Embedding,
    edge_repulsion: bool,
) -> Result<ForceField> {
    if g.is_directed() {
        return Err(Error::invalid("ForceAtlas2 expects an undirected graph"));
    }
    if degrees.len() != g.n() {
        return Err(Error::Shape {
            expected: format!("{} degrees", g.n()),
            got: format!("{}", degrees.len()),
        });
    }
    let att = fa2_attraction(g, y)?;
    let rep = fa2_repulsion_exact(&fa2_masses(degrees, edge_repulsion), y)?;
    Ok(att.add_scaled(&rep, -1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceMethod {
    Tsne,
    Umap,
    Fa2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub method: ForceMethod,
    /// Exaggeration: repulsion is divided by `rho` (t-SNE, UMAP). For FA2
    /// the attraction is multiplied by `rho` instead.
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub edge_repulsion: bool,
}

impl ForceSpec {
    pub fn tsne(rho: f64) -> Self {
        Self {
            method: ForceMethod::Tsne,
            rho,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            edge_repulsion: false,
        }
    }

    pub fn umap(gamma: f64, epsilon: f64) -> Self {
        Self {
            method: ForceMethod::Umap,
            rho: 1.0,
            gamma,
            epsilon,
            edge_repulsion: false,
        }
    }

    pub fn fa2(edge_repulsion: bool) -> Self {
        Self {
            method: ForceMethod::Fa2,
            rho: 1.0,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            edge_repulsion,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!(
                "exaggeration must be positive and finite, got {}",
                self.rho
            )));
        }
        if self.method == ForceMethod::Umap && !(self.gamma > 0.0 && self.epsilon >= 0.0) {
            return Err(Error::invalid("UMAP needs gamma > 0 and epsilon >= 0"));
        }
        Ok(())
    }
}

/// How the all-pairs repulsion is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepulsionMode {
    Exact,
    BarnesHut { theta: f64 },
}

/// The graph inputs a method consumes.
#[derive(Clone, Copy)]
pub struct GraphInputs<'a> {
    pub affinities: Option<&'a AffinityGraph>,
    pub graph: Option<&'a NeighborGraph>,
    /// FA2 repulsion weights; computed from the graph if absent.
    pub masses: Option<&'a [f64]>,
}

impl<'a> GraphInputs<'a> {
    pub fn affinities(a: &'a AffinityGraph) -> Self {
        Self {
            affinities: Some(a),
            graph: None,
            masses: None,
        }
    }

    pub fn graph(g: &'a NeighborGraph) -> Self {
        Self {
            affinities: None,
            graph: Some(g),
            masses: None,
        }
    }
}

/// Gradient field for `spec` with exact repulsion.
///
/// * t-SNE: `n sum_j p_ij w_ij (y_i - y_j) - (1 / rho) (n / Z) sum w^2 (y_i - y_j)`
/// * UMAP: `attraction(cauchy) - (gamma / rho) sum w / (d^2 + eps) (y_i - y_j)`
/// * FA2: `rho * sum_edges (y_i - y_j) - sum c_ij / d^2 (y_i - y_j)`
pub fn assemble_gradient(
    spec: &ForceSpec,
    inputs: GraphInputs<'_>,
    y: &Embedding,
) -> Result<ForceField> {
    assemble_gradient_with(spec, inputs, y, RepulsionMode::Exact)
}

pub fn assemble_gradient_with(
    spec: &ForceSpec,
    inputs: GraphInputs<'_>,
    y: &Embedding,
    mode: RepulsionMode,
) -> Result<ForceField> {
    spec.validate()?;
    match spec.method {
        ForceMethod::Tsne | ForceMethod::Umap => {
            let a = inputs
                .affinities
                .ok_or_else(|| Error::invalid("t-SNE and UMAP gradients need an affinity graph"))?;
            let mut att = attraction(a, y, AttractionKernel::Cauchy)?;
            if spec.method == ForceMethod::Tsne {
                // t-SNE attracts with n p_ij, which is v_ij for perplexity
                // affinities and v_ij n / sum(v) for binary ones.
                att = att.scaled(a.n() as f64 / a.normalizer());
            }
            let rep = match (spec.method, mode) {
                (ForceMethod::Tsne, RepulsionMode::Exact) => tsne_repulsion_exact(y),
                (_, RepulsionMode::Exact) => umap_repulsion_exact(y, spec.gamma, spec.epsilon)?,
                (ForceMethod::Tsne, RepulsionMode::BarnesHut { theta }) => {
                    QuadTree::build(y, None).repulsion(RepulsionKernel::TsneW2, theta)
                }
                (_, RepulsionMode::BarnesHut { theta }) => QuadTree::build(y, None).repulsion(
                    RepulsionKernel::UmapEps {
                        gamma: spec.gamma,
                        epsilon: spec.epsilon,
                    },
                    theta,
                ),
            };
            Ok(att.add_scaled(&rep, -1.0 / spec.rho))
        }
        ForceMethod::Fa2 => {
            let g = inputs
                .graph
                .ok_or_else(|| Error::invalid("ForceAtlas2 needs an undirected neighbor graph"))?;
            if g.is_directed() {
                return Err(Error::invalid("ForceAtlas2 expects an undirected graph"));
            }
            let owned;
            let masses = match inputs.masses {
                Some(m) => m,
                None => {
                    owned = fa2_masses(&g.degrees(), spec.edge_repulsion);
                    &owned
                }
            };
            let att = fa2_attraction(g, y)?;
            let rep = match mode {
                RepulsionMode::Exact => fa2_repulsion_exact(masses, y)?,
                RepulsionMode::BarnesHut { theta } => {
                    check_sizes(masses.len(), y)?;
                    QuadTree::build(y, Some(masses))
                        .repulsion(RepulsionKernel::InverseSquare, theta)
                }
            };
            Ok(att.scaled(spec.rho).add_scaled(&rep, -1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityKind;

    fn pair(d: f64) -> Embedding {
        Embedding::new(vec![[0.0, 0.0], [d, 0.0]]).unwrap()
    }

    fn edge() -> AffinityGraph {
        AffinityGraph::from_pairs(2, AffinityKind::BinaryKnn, [(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn coincident_points_feel_no_attraction() {
        let f = attraction(&edge(), &pair(0.0), AttractionKernel::Cauchy).unwrap();
        assert_eq!(f.forces, vec![[0.0; 2]; 2]);
    }

    #[test]
    fn unit_distance_cauchy_attraction() {
        let f = attraction(&edge(), &pair(1.0), AttractionKernel::Cauchy).unwrap();
        assert!((f.forces[0][0] + 0.5).abs() < 1e-15);
        assert!((f.forces[1][0] - 0.5).abs() < 1e-15);
        let l = attraction(&edge(), &pair(3.0), AttractionKernel::Linear).unwrap();
        assert_eq!(l.forces[1], [3.0, 0.0]);
    }

    #[test]
    fn two_point_tsne_repulsion_closed_form() {
        let d = 1.7_f64;
        let f = tsne_repulsion_exact(&pair(d));
        let z = 2.0 / (1.0 + d * d);
        assert!((f.z_sum.unwrap() - z).abs() < 1e-15);
        // (y1 - y2) / (1 + d^2) for the point at d.
        assert!((f.forces[1][0] - d / (1.0 + d * d)).abs() < 1e-15);
    }

    #[test]
    fn coincident_cloud_z() {
        let y = Embedding::new(vec![[2.0, 2.0]; 5]).unwrap();
        let f = tsne_repulsion_exact(&y);
        assert_eq!(f.z_sum, Some(20.0));
        assert!(f.forces.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn umap_at_unit_epsilon_matches_tsne_kernel() {
        let y = pair(0.8);
        let u = umap_repulsion_exact(&y, 1.0, 1.0).unwrap();
        let t = tsne_repulsion_exact(&y);
        let zn = t.z_sum.unwrap() / 2.0;
        for (a, b) in u.forces.iter().zip(&t.forces) {
            assert!((a[0] - b[0] * zn).abs() < 1e-15);
        }
    }

    #[test]
    fn umap_zero_epsilon_rejects_coincident_points() {
        let y = Embedding::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(umap_repulsion_exact(&y, 1.0, 0.0).is_err());
        assert!(umap_repulsion_exact(&y, 1.0, 0.001).is_ok());
        assert!(umap_repulsion_exact(&y, 0.0, 0.001).is_err());
    }

    fn two_node_graph() -> NeighborGraph {
        NeighborGraph::from_lists(vec![vec![(1, 1.0)], vec![(0, 1.0)]], 1, false).unwrap()
    }

    #[test]
    fn fa2_two_node_equilibria() {
        let g = two_node_graph();
        for (edge_rep, eq) in [(true, 2.0), (false, 1.0)] {
            let f = fa2_forces(&g, &[1, 1], &pair(eq), edge_rep).unwrap();
            assert!(f.forces[0][0].abs() < 1e-12, "{edge_rep}: {:?}", f.forces);
            let d = 3.0;
            let f = fa2_forces(&g, &[1, 1], &pair(d), edge_rep).unwrap();
            let c = if edge_rep { 4.0 } else { 1.0 };
            assert!((f.forces[1][0] - (d - c / d)).abs() < 1e-12);
        }
    }

    #[test]
    fn fa2_coincident_pair_is_pushed_apart_symmetrically() {
        let g = two_node_graph();
        let f = fa2_forces(&g, &[1, 1], &pair(0.0), true).unwrap();
        assert!(f.all_finite());
        assert!(norm2(f.forces[0]) > 0.0);
        assert_eq!(f.forces[0][0], -f.forces[1][0]);
        assert_eq!(f.forces[0][1], -f.forces[1][1]);
    }

    #[test]
    fn tsne_rho_one_is_plain_gradient() {
        let a = edge();
        let y = pair(0.6);
        let g = assemble_gradient(&ForceSpec::tsne(1.0), GraphInputs::affinities(&a), &y).unwrap();
        let att = attraction(&a, &y, AttractionKernel::Cauchy).unwrap();
        let rep = tsne_repulsion_exact(&y);
        for i in 0..2 {
            assert!((g.forces[i][0] - (att.forces[i][0] - rep.forces[i][0])).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_inputs_rejected() {
        let y = pair(1.0);
        let none = GraphInputs {
            affinities: None,
            graph: None,
            masses: None,
        };
        assert!(assemble_gradient(&ForceSpec::tsne(1.0), none, &y).is_err());
        assert!(assemble_gradient(&ForceSpec::fa2(true), none, &y).is_err());
        let a = edge();
        let bad = Embedding::new(vec![[0.0; 2]; 3]).unwrap();
        assert!(
            assemble_gradient(&ForceSpec::tsne(1.0), GraphInputs::affinities(&a), &bad).is_err()
        );
        assert!(assemble_gradient(&ForceSpec::tsne(0.0), GraphInputs::affinities(&a), &y).is_err());
    }

    #[test]
    fn huge_exaggeration_leaves_only_linear_attraction() {
        let y = Embedding::new(
            (0..8)
                .map(|i| [1e-4 * (i as f64).sin(), 1e-4 * (i as f64 * 0.7).cos()])
                .collect(),
        )
        .unwrap();
        let a = AffinityGraph::from_pairs(
            8,
            AffinityKind::GaussianPerplexity,
            (0..8).map(|i| (i, (i + 1) % 8, 0.3 + 0.05 * i as f64)),
        )
        .unwrap();
        let g = assemble_gradient(&ForceSpec::tsne(1e4), GraphInputs::affinities(&a), &y).unwrap();
        let lin = attraction(&a, &y, AttractionKernel::Linear).unwrap();
        for (f, l) in g.forces.iter().zip(&lin.forces) {
            let err = norm2(sub(*f, *l)).sqrt() / norm2(*l).sqrt();
            assert!(err < 0.01, "relative deviation {err}");
        }
    }
}
