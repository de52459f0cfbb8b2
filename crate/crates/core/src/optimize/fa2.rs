use serde::{Deserialize, Serialize};

use super::batch::{check_finite_span, repulsion_mode};
use super::{RunTrace, DEFAULT_RECORD_EVERY};
use crate::embedding::{norm2, Embedding};
use crate::error::{Error, Result};
use crate::forces::{
    assemble_gradient_with, fa2_attraction, fa2_masses, ForceField, ForceSpec, GraphInputs,
};
use crate::knn::NeighborGraph;

const STEP_GROWTH: f64 = 1.05;
const STEP_CUT: f64 = 0.5;
/// Each oscillation also lowers the ceiling the step may grow back to.
const CEILING_CUT: f64 = 0.9;
const CAP_QUANTILE: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fa2Config {
    pub edge_repulsion: bool,
    /// Multiplier `a` on the attractive forces.
    pub attraction_scale: f64,
    pub max_iters: usize,
    pub theta: f64,
    /// Stop once the mean residual force falls below `tol` times the mean
    /// attractive force.
    pub tol: f64,
    pub momentum: f64,
    pub record_every: usize,
}

impl Default for Fa2Config {
    fn default() -> Self {
        Self {
            edge_repulsion: true,
            attraction_scale: 1.0,
            max_iters: 3000,
            theta: crate::quadtree::DEFAULT_THETA,
            tol: 1e-4,
            momentum: 0.5,
            record_every: DEFAULT_RECORD_EVERY,
        }
    }
}

/// ForceAtlas2 layout by momentum descent on the net force field.
///
/// The step starts at `1 / mean degree`. Whenever the total force turns
/// against the previous one (an overshoot) the step is halved, the velocity
/// is cleared and the step ceiling is lowered; otherwise the step grows by
/// 5% up to that ceiling. Per-point forces are capped at their 99th
/// percentile norm so a few near-coincident pairs cannot fling points away.
pub fn run_fa2(
    g: &NeighborGraph,
    degrees: &[usize],
    y0: &Embedding,
    cfg: &Fa2Config,
) -> Result<(Embedding, RunTrace)> {
    if g.is_directed() {
        return Err(Error::invalid("ForceAtlas2 expects an undirected graph"));
    }
    if degrees.len() != g.n() || y0.n() != g.n() {
        return Err(Error::Shape {
            expected: format!("{} nodes", g.n()),
            got: format!("{} degrees, {} embedding rows", degrees.len(), y0.n()),
        });
    }
    if !(cfg.attraction_scale > 0.0
        && cfg.tol >= 0.0
        && (0.0..1.0).contains(&cfg.momentum)
        && cfg.record_every > 0)
    {
        return Err(Error::invalid(format!(
            "invalid ForceAtlas2 config {cfg:?}"
        )));
    }
    let mode = repulsion_mode(cfg.theta)?;
    let n = g.n();
    let mean_degree = degrees.iter().sum::<usize>() as f64 / n as f64;
    if mean_degree == 0.0 {
        return Err(Error::invalid("graph has no edges"));
    }
    let masses = fa2_masses(degrees, cfg.edge_repulsion);
    let spec = ForceSpec {
        rho: cfg.attraction_scale,
        ..ForceSpec::fa2(cfg.edge_repulsion)
    };
    let inputs = GraphInputs {
        affinities: None,
        graph: Some(g),
        masses: Some(&masses),
    };

    let mut y = y0.clone();
    let mut velocity = vec![[0.0; 2]; n];
    let mut previous: Option<ForceField> = None;
    let mut ceiling = 1.0 / mean_degree;
    let mut step = ceiling;
    let mut trace = RunTrace::new("fa2", n);
    trace.converged = Some(false);
    check_finite_span(&y, 0, &trace)?;

    for t in 0..cfg.max_iters {
        let f = assemble_gradient_with(&spec, inputs, &y, mode)?;
        let residual = f.mean_norm();
        let att = fa2_attraction(g, &y)?.mean_norm() * cfg.attraction_scale;
        if residual <= cfg.tol * att {
            trace.converged = Some(true);
            trace.record(t, &y, None, 1.0, residual);
            return Ok((y, trace));
        }
        let f = cap_forces(f);
        if let Some(prev) = &previous {
            let alignment: f64 = f
                .forces
                .iter()
                .zip(&prev.forces)
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
                .sum();
            if alignment < 0.0 {
                ceiling = (ceiling * CEILING_CUT).max(step * STEP_CUT);
                step *= STEP_CUT;
                velocity.iter_mut().for_each(|v| *v = [0.0; 2]);
            } else {
                step = (step * STEP_GROWTH).min(ceiling);
            }
        }
        for ((p, v), force) in y.coords_mut().iter_mut().zip(&mut velocity).zip(&f.forces) {
            for c in 0..2 {
                v[c] = cfg.momentum * v[c] - step * force[c];
                p[c] += v[c];
            }
        }
        trace.iterations = t + 1;
        if (t + 1) % cfg.record_every == 0 || t + 1 == cfg.max_iters {
            trace.record(t + 1, &y, None, 1.0, residual);
        }
        check_finite_span(&y, t + 1, &trace)?;
        previous = Some(f);
    }
    Ok((y, trace))
}

fn cap_forces(mut f: ForceField) -> ForceField {
    let n = f.forces.len();
    if n < 2 {
        return f;
    }
    let mut norms: Vec<f64> = f.forces.iter().map(|v| norm2(*v).sqrt()).collect();
    let idx = ((n - 1) as f64 * CAP_QUANTILE).round() as usize;
    let cap = *norms.select_nth_unstable_by(idx, f64::total_cmp).1;
    if cap > 0.0 {
        for v in &mut f.forces {
            let norm = norm2(*v).sqrt();
            if norm > cap {
                *v = [v[0] * cap / norm, v[1] * cap / norm];
            }
        }
    }
    f
}
