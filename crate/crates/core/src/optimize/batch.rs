use serde::{Deserialize, Serialize};

use super::{RunTrace, Schedule, MAX_SPAN};
use crate::affinity::AffinityGraph;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::forces::{
    assemble_gradient_with, ForceField, ForceSpec, GraphInputs, RepulsionMode, DEFAULT_EPSILON,
    DEFAULT_GAMMA,
};

const GAIN_UP: f64 = 0.2;
const GAIN_DOWN: f64 = 0.8;
const MIN_GAIN: f64 = 0.01;

pub(crate) fn repulsion_mode(theta: f64) -> Result<RepulsionMode> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must be >= 0, got {theta}")));
    }
    Ok(if theta == 0.0 {
        RepulsionMode::Exact
    } else {
        RepulsionMode::BarnesHut { theta }
    })
}

pub(crate) fn check_finite_span(y: &Embedding, iter: usize, trace: &RunTrace) -> Result<()> {
    let reason = if !y.is_finite() {
        "non-finite coordinates".to_string()
    } else if y.span() > MAX_SPAN {
        format!("span {:.3e} exceeds {MAX_SPAN:e}", y.span())
    } else {
        return Ok(());
    };
    Err(Error::Diverged {
        iter,
        reason,
        trace: Box::new(trace.clone()),
    })
}

/// Momentum gradient descent with delta-bar-delta gains.
///
/// At iteration `t` every coordinate moves by
/// `u <- m(t) u - (eta rho(t) / n) g G`, where `G` is the field returned by
/// `field(y, rho(t))` and `g` the coordinate's gain. A gain grows by 0.2
/// while the gradient keeps its sign relative to the running update and
/// shrinks by 0.8 when it flips.
fn descend(
    method: &str,
    y0: &Embedding,
    sched: &Schedule,
    eta: f64,
    mut field: impl FnMut(&Embedding, f64) -> Result<ForceField>,
) -> Result<(Embedding, RunTrace)> {
    sched.validate()?;
    let n = y0.n();
    let mut y = y0.clone();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut trace = RunTrace::new(method, n);
    check_finite_span(&y, 0, &trace)?;

    for t in 0..sched.total_iters {
        let rho = sched.rho_at(t);
        let g = field(&y, rho)?;
        let step = eta * rho / n as f64;
        let momentum = sched.momentum_at(t);
        for ((p, u), (gain, f)) in y
            .coords_mut()
            .iter_mut()
            .zip(&mut update)
            .zip(gains.iter_mut().zip(&g.forces))
        {
            for c in 0..2 {
                gain[c] = if (f[c] > 0.0) != (u[c] > 0.0) {
                    gain[c] + GAIN_UP
                } else {
                    (gain[c] * GAIN_DOWN).max(MIN_GAIN)
                };
                u[c] = momentum * u[c] - step * gain[c] * f[c];
                p[c] += u[c];
            }
        }
        trace.iterations = t + 1;
        let last = t + 1 == sched.total_iters;
        if (t + 1) % sched.record_every == 0 || last {
            trace.record(t + 1, &y, g.z_sum, rho, g.mean_norm());
        }
        check_finite_span(&y, t + 1, &trace)?;
    }
    Ok((y, trace))
}

/// t-SNE with exaggeration `sched.final_rho`.
///
/// `theta = 0` evaluates the repulsion exactly; larger values use
/// Barnes–Hut.
pub fn run_tsne(
    a: &AffinityGraph,
    y0: &Embedding,
    sched: &Schedule,
    theta: f64,
) -> Result<(Embedding, RunTrace)> {
    check_sizes(a, y0)?;
    let mode = repulsion_mode(theta)?;
    let eta = sched.learning_rate(y0.n());
    descend("tsne", y0, sched, eta, |y, rho| {
        assemble_gradient_with(&ForceSpec::tsne(rho), GraphInputs::affinities(a), y, mode)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UmapFullConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub theta: f64,
    /// Defaults to [`UmapFullConfig::default_schedule`].
    pub schedule: Schedule,
    /// Starting layout that replaces `y0`, e.g. a converged low-`gamma`
    /// embedding used in place of early exaggeration.
    pub warm_start: Option<Embedding>,
}

impl Default for UmapFullConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            theta: crate::quadtree::DEFAULT_THETA,
            schedule: Self::default_schedule(),
            warm_start: None,
        }
    }
}

impl UmapFullConfig {
    /// 750 iterations without early exaggeration.
    pub fn default_schedule() -> Schedule {
        Schedule::default().without_early_phase()
    }

    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }
}

/// UMAP's full loss, optimized without negative sampling.
///
/// Uses the t-SNE integrator. The step follows the same rule with `p_ij`
/// taken as `v_ij / sum(v)`, which gives `eta = n / (rho_max h)` for mean
/// degree `h`.
pub fn run_umap_full(
    a: &AffinityGraph,
    y0: &Embedding,
    cfg: &UmapFullConfig,
) -> Result<(Embedding, RunTrace)> {
    check_sizes(a, y0)?;
    if !(cfg.gamma > 0.0) || !(cfg.epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "UMAP needs gamma > 0 and epsilon >= 0, got {} and {}",
            cfg.gamma, cfg.epsilon
        )));
    }
    let start = match &cfg.warm_start {
        Some(w) => {
            check_sizes(a, w)?;
            w
        }
        None => y0,
    };
    let mode = repulsion_mode(cfg.theta)?;
    let n = start.n();
    let mean_degree = a.total_mass() / n as f64;
    if !(mean_degree > 0.0) {
        return Err(Error::invalid("affinity graph has no edges"));
    }
    let eta = cfg
        .schedule
        .learning_rate
        .unwrap_or(n as f64 / (cfg.schedule.peak_rho() * mean_degree));
    descend("umap-bh", start, &cfg.schedule, eta, |y, rho| {
        let spec = ForceSpec {
            rho,
            ..ForceSpec::umap(cfg.gamma, cfg.epsilon)
        };
        assemble_gradient_with(&spec, GraphInputs::affinities(a), y, mode)
    })
}

fn check_sizes(a: &AffinityGraph, y: &Embedding) -> Result<()> {
    if a.n() != y.n() {
        return Err(Error::Shape {
            expected: format!("{} points", a.n()),
            got: format!("{} embedding rows", y.n()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{binary_affinities, perplexity_calibrate};
    use crate::data::{gen_gaussian_chain, make_init, InitConfig};
    use crate::knn::{build_knn, KnnAlgorithm};
    use crate::method::Method;

    fn toy() -> (crate::data::DataMatrix, AffinityGraph, AffinityGraph) {
        let chain = gen_gaussian_chain(3, 40, 5, 6.0, 3).unwrap();
        let g = build_knn(&chain.data, 15, KnnAlgorithm::Exact).unwrap();
        let gauss = perplexity_calibrate(
            &build_knn(&chain.data, 30, KnnAlgorithm::Exact).unwrap(),
            10.0,
        )
        .unwrap();
        let bin = binary_affinities(&g.symmetrize_union()).unwrap();
        (chain.data, gauss, bin)
    }

    #[test]
    fn tsne_is_deterministic_and_records_z() {
        let (x, a, _) = toy();
        let y0 = make_init(&x, &InitConfig::for_method(Method::Tsne, 1).unwrap()).unwrap();
        let sched = Schedule {
            total_iters: 60,
            early_iters: 20,
            momentum_switch: 20,
            ..Schedule::default()
        };
        let (y1, t1) = run_tsne(&a, &y0, &sched, 0.5).unwrap();
        let (y2, t2) = run_tsne(&a, &y0, &sched, 0.5).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(t1, t2);
        assert_eq!(t1.records.len(), 6);
        let last = t1.last().unwrap();
        assert_eq!(last.iter, 60);
        assert!(last.z.unwrap() > 0.0);
        assert!(last.span_x > 0.0 && last.span_y > 0.0);
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let (x, a, _) = toy();
        let y0 = make_init(&x, &InitConfig::for_method(Method::Tsne, 2).unwrap()).unwrap();
        let sched = Schedule {
            total_iters: 200,
            learning_rate: Some(1e12),
            ..Schedule::default()
        };
        match run_tsne(&a, &y0, &sched, 0.5) {
            Err(Error::Diverged { iter, .. }) => assert!(iter >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn umap_full_warm_start_and_validation() {
        let (x, _, b) = toy();
        let y0 = make_init(&x, &InitConfig::for_method(Method::UmapBh, 4).unwrap()).unwrap();
        let mut cfg = UmapFullConfig::with_gamma(0.01);
        cfg.schedule.total_iters = 30;
        let (y1, t) = run_umap_full(&b, &y0, &cfg).unwrap();
        assert_eq!(t.iterations, 30);
        assert!(t.last().unwrap().z.is_none());
        cfg.warm_start = Some(y1.clone());
        cfg.schedule.total_iters = 1;
        let (y2, _) = run_umap_full(&b, &y0, &cfg).unwrap();
        let moved: f64 = y2
            .coords()
            .iter()
            .zip(y1.coords())
            .map(|(p, q)| (p[0] - q[0]).abs())
            .sum();
        assert!(moved / (x.n() as f64) < 1.0);
        cfg.gamma = 0.0;
        assert!(run_umap_full(&b, &y0, &cfg).is_err());
    }
}
