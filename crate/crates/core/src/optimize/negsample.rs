use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::check_finite_span;
use super::{RunTrace, DEFAULT_RECORD_EVERY};
use crate::affinity::AffinityGraph;
use crate::embedding::{norm2, sub, Embedding};
use crate::error::{Error, Result};
use crate::forces::{DEFAULT_EPSILON, DEFAULT_GAMMA};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegSampleConfig {
    /// Negative samples drawn per positive edge update.
    pub nu: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Move both endpoints of an attractive edge.
    pub move_tail_on_attraction: bool,
    /// Per-coordinate cap on every update before the step is applied.
    pub clip: f64,
    /// Initial step, decayed linearly to zero.
    pub lr0: f64,
    pub record_every: usize,
}

impl Default for NegSampleConfig {
    fn default() -> Self {
        Self {
            nu: 5,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            epochs: 750,
            move_tail_on_attraction: true,
            clip: 4.0,
            lr0: 1.0,
            record_every: DEFAULT_RECORD_EVERY,
        }
    }
}

impl NegSampleConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma.is_finite()
            && self.epsilon >= 0.0
            && self.clip > 0.0
            && self.lr0 > 0.0
            && self.record_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid negative-sampling config {self:?}"
            )))
        }
    }
}

#[inline]
fn clip(v: f64, c: f64) -> f64 {
    v.clamp(-c, c)
}

/// Update applied to `y_i` (before the step size) when `l` is drawn as a
/// negative sample: `clip(2 gamma / ((eps + d^2)(1 + d^2)) (y_i - y_l))`.
/// Zero when the two points coincide.
pub fn repulsive_displacement(
    y: &Embedding,
    i: usize,
    l: usize,
    gamma: f64,
    epsilon: f64,
    clip_at: f64,
) -> [f64; 2] {
    let c = y.coords();
    repulsive_update(c[i], c[l], gamma, epsilon, clip_at)
}

#[inline]
fn repulsive_update(
    yi: [f64; 2],
    yl: [f64; 2],
    gamma: f64,
    epsilon: f64,
    clip_at: f64,
) -> [f64; 2] {
    let d = sub(yi, yl);
    let d2 = norm2(d);
    if d2 == 0.0 {
        return [0.0; 2];
    }
    let coef = 2.0 * gamma / ((epsilon + d2) * (1.0 + d2));
    [clip(coef * d[0], clip_at), clip(coef * d[1], clip_at)]
}

/// UMAP's stochastic optimizer.
///
/// Every epoch visits each directed edge `i -> j` (both orientations of the
/// symmetric graph) in a freshly shuffled order. Edges with weight below
/// the maximum are visited proportionally less often. A visit pulls `i`
/// (and `j`, with `move_tail_on_attraction`) together with the Cauchy
/// kernel, then pushes `i` away from `nu` nodes drawn uniformly from all
/// `n`.
pub fn run_umap_ns(
    a: &AffinityGraph,
    y0: &Embedding,
    cfg: &NegSampleConfig,
    seed: u64,
) -> Result<(Embedding, RunTrace)> {
    cfg.validate()?;
    if a.n() != y0.n() {
        return Err(Error::Shape {
            expected: format!("{} points", a.n()),
            got: format!("{} embedding rows", y0.n()),
        });
    }
    let n = a.n();
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| a.row(i).map(move |(j, v)| (i, j, v)))
        .collect();
    if edges.is_empty() {
        return Err(Error::invalid("affinity graph has no edges"));
    }
    let vmax = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let period: Vec<f64> = edges.iter().map(|e| vmax / e.2).collect();
    let mut next_visit = period.clone();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut coords = y0.coords().to_vec();
    let mut trace = RunTrace::new("umap-ns", n);
    check_finite_span(y0, 0, &trace)?;

    for epoch in 0..cfg.epochs {
        let alpha = cfg.lr0 * (1.0 - epoch as f64 / cfg.epochs as f64);
        let due = (epoch + 1) as f64;
        order.shuffle(&mut rng);
        let mut moved = 0.0;
        for &e in &order {
            if next_visit[e] > due {
                continue;
            }
            next_visit[e] += period[e];
            let (i, j, _) = edges[e];
            let d = sub(coords[i], coords[j]);
            let coef = -2.0 / (1.0 + norm2(d));
            for c in 0..2 {
                let g = clip(coef * d[c], cfg.clip) * alpha;
                coords[i][c] += g;
                if cfg.move_tail_on_attraction {
                    coords[j][c] -= g;
                }
                moved += g.abs();
            }
            for _ in 0..cfg.nu {
                let l = rng.random_range(0..n);
                let g = repulsive_update(coords[i], coords[l], cfg.gamma, cfg.epsilon, cfg.clip);
                coords[i][0] += g[0] * alpha;
                coords[i][1] += g[1] * alpha;
                moved += (g[0].abs() + g[1].abs()) * alpha;
            }
        }
        let y = Embedding::from_raw(coords);
        trace.iterations = epoch + 1;
        if (epoch + 1) % cfg.record_every == 0 || epoch + 1 == cfg.epochs {
            trace.record(epoch + 1, &y, None, 1.0, moved / n as f64);
        }
        check_finite_span(&y, epoch + 1, &trace)?;
        coords = y.into_coords();
    }
    Ok((Embedding::from_raw(coords), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::binary_affinities;
    use crate::data::gen_gaussian_chain;
    use crate::knn::{build_knn, KnnAlgorithm};

    fn setup() -> (AffinityGraph, Embedding) {
        let chain = gen_gaussian_chain(1, 100, 4, 0.0, 9).unwrap();
        let g = build_knn(&chain.data, 10, KnnAlgorithm::Exact)
            .unwrap()
            .symmetrize_union();
        let a = binary_affinities(&g).unwrap();
        let y0 = crate::data::make_init(
            &chain.data,
            &crate::data::InitConfig::for_method(crate::method::Method::UmapNs, 0).unwrap(),
        )
        .unwrap();
        (a, y0)
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (a, y0) = setup();
        let cfg = NegSampleConfig {
            epochs: 40,
            ..NegSampleConfig::default()
        };
        let r1 = run_umap_ns(&a, &y0, &cfg, 5).unwrap();
        let r2 = run_umap_ns(&a, &y0, &cfg, 5).unwrap();
        assert_eq!(r1.0, r2.0);
        assert_eq!(r1.1, r2.1);
        let r3 = run_umap_ns(&a, &y0, &cfg, 6).unwrap();
        assert_ne!(r1.0, r3.0);
    }

    #[test]
    fn no_negatives_collapses() {
        let (a, y0) = setup();
        let cfg = NegSampleConfig {
            nu: 0,
            epochs: 100,
            ..NegSampleConfig::default()
        };
        let (_, trace) = run_umap_ns(&a, &y0, &cfg, 1).unwrap();
        let spans: Vec<f64> = trace
            .records
            .iter()
            .map(|r| r.span_x.max(r.span_y))
            .collect();
        assert!(spans[0] < y0.span());
        // Strictly shrinking until the layout has collapsed to a point.
        assert!(
            spans.windows(2).all(|w| w[1] < w[0] || w[0] == 0.0),
            "{spans:?}"
        );
    }

    #[test]
    fn displacement_is_zero_for_self_draw_and_clipped() {
        let y = Embedding::new(vec![[0.0, 0.0], [0.03, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(
            repulsive_displacement(&y, 0, 0, 1.0, 0.001, 4.0),
            [0.0, 0.0]
        );
        assert_eq!(
            repulsive_displacement(&y, 0, 1, 1.0, 0.001, 4.0),
            [-4.0, 0.0]
        );
        let far = repulsive_displacement(&y, 0, 2, 1.0, 0.001, 4.0);
        assert!((far[0] + 2.0 * 2.0 / (4.001 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn invalid_config_rejected() {
        let (a, y0) = setup();
        let cfg = NegSampleConfig {
            gamma: 0.0,
            ..NegSampleConfig::default()
        };
        assert!(run_umap_ns(&a, &y0, &cfg, 0).is_err());
    }
}
