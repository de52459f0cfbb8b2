use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{pca_reduce, DataMatrix};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::method::Method;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Top two principal components of the input.
    Pca,
    /// I.i.d. standard Gaussian coordinates.
    Random,
    /// Caller-supplied coordinates.
    Provided(Embedding),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleRule {
    /// Center each column, then scale so the pooled standard deviation of
    /// all `2n` coordinates equals the given value.
    StdDev(f64),
    /// Scale uniformly (both axes by the same factor) so the widest axis
    /// spans exactly `[lo, hi]`; the other axis is centered in that range.
    Range(f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub mode: InitMode,
    /// `None` leaves the coordinates at their natural scale.
    pub scale: Option<ScaleRule>,
    pub seed: u64,
}

impl InitConfig {
    /// Per-method defaults: t-SNE std 1e-4, UMAP range [-10, 10], FA2 std
    /// 10 000. Laplacian eigenmaps needs no initialization.
    pub fn for_method(method: Method, seed: u64) -> Option<Self> {
        let scale = match method {
            Method::Tsne => ScaleRule::StdDev(1e-4),
            Method::UmapNs | Method::UmapBh => ScaleRule::Range(-10.0, 10.0),
            Method::Fa2 => ScaleRule::StdDev(10_000.0),
            Method::Le => return None,
        };
        Some(Self {
            mode: InitMode::Pca,
            scale: Some(scale),
            seed,
        })
    }

    pub fn with_mode(mut self, mode: InitMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        match self.scale {
            Some(ScaleRule::StdDev(s)) if !(s > 0.0 && s.is_finite()) => Err(Error::invalid(
                format!("init standard deviation must be > 0, got {s}"),
            )),
            Some(ScaleRule::Range(lo, hi)) if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(Error::invalid(format!(
                    "init range must satisfy lo < hi, got [{lo}, {hi}]"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Builds the starting layout for an optimizer.
pub fn make_init(x: &DataMatrix, cfg: &InitConfig) -> Result<Embedding> {
    cfg.validate()?;
    let coords = match &cfg.mode {
        InitMode::Pca => {
            let scores = if x.dim() >= 2 {
                pca_reduce(x, 2)?.scores
            } else {
                // One feature: the second axis carries no variance.
                let p = pca_reduce(x, 1)?.scores;
                DataMatrix::new(x.n(), 2, p.rows().flat_map(|r| [r[0], 0.0]).collect())?
            };
            scores.rows().map(|r| [r[0], r[1]]).collect()
        }
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..x.n())
                .map(|_| {
                    [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ]
                })
                .collect()
        }
        InitMode::Provided(y) => {
            if y.n() != x.n() {
                return Err(Error::Shape {
                    expected: format!("{} points", x.n()),
                    got: format!("{} points", y.n()),
                });
            }
            y.coords().to_vec()
        }
    };
    let mut y = Embedding::new(coords)?;
    if let Some(rule) = cfg.scale {
        rescale(&mut y, rule)?;
    }
    Ok(y)
}

/// Population standard deviation of all coordinates around their column means.
pub fn pooled_std(y: &Embedding) -> f64 {
    let n = y.n() as f64;
    let mean = column_means(y);
    let ss: f64 = y
        .coords()
        .iter()
        .map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2))
        .sum();
    (ss / (2.0 * n)).sqrt()
}

fn column_means(y: &Embedding) -> [f64; 2] {
    let n = y.n() as f64;
    let s = y
        .coords()
        .iter()
        .fold([0.0; 2], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

fn rescale(y: &mut Embedding, rule: ScaleRule) -> Result<()> {
    match rule {
        ScaleRule::StdDev(target) => {
            let mean = column_means(y);
            let sd = pooled_std(y);
            if sd == 0.0 {
                return Err(Error::invalid("cannot rescale a constant initialization"));
            }
            let f = target / sd;
            for p in y.coords_mut() {
                *p = [(p[0] - mean[0]) * f, (p[1] - mean[1]) * f];
            }
        }
        ScaleRule::Range(lo, hi) => {
            let spans = y.axis_spans();
            let widest = spans[0].max(spans[1]);
            if widest == 0.0 {
                return Err(Error::invalid("cannot rescale a constant initialization"));
            }
            let f = (hi - lo) / widest;
            let mut mins = [f64::INFINITY; 2];
            for p in y.coords() {
                mins = [mins[0].min(p[0]), mins[1].min(p[1])];
            }
            // The widest axis maps onto [lo, hi]; the other is centered.
            let offsets = [0, 1].map(|c| lo + 0.5 * ((hi - lo) - spans[c] * f));
            for p in y.coords_mut() {
                for c in 0..2 {
                    p[c] = offsets[c] + (p[c] - mins[c]) * f;
                }
            }
            // Pin the extremes of the widest axis exactly against rounding.
            let c = if spans[0] >= spans[1] { 0 } else { 1 };
            for p in y.coords_mut() {
                p[c] = p[c].clamp(lo, hi);
            }
            let (imin, imax) = argminmax(y, c);
            y.coords_mut()[imin][c] = lo;
            y.coords_mut()[imax][c] = hi;
        }
    }
    Ok(())
}

fn argminmax(y: &Embedding, c: usize) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, p) in y.coords().iter().enumerate() {
        if p[c] < y.coords()[lo][c] {
            lo = i;
        }
        if p[c] > y.coords()[hi][c] {
            hi = i;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian_chain;

    fn data() -> DataMatrix {
        gen_gaussian_chain(3, 30, 5, 4.0, 11).unwrap().data
    }

    #[test]
    fn tsne_default_std() {
        let cfg = InitConfig::for_method(Method::Tsne, 0).unwrap();
        let y = make_init(&data(), &cfg).unwrap();
        assert!((pooled_std(&y) - 1e-4).abs() < 1e-7);
    }

    #[test]
    fn umap_default_range() {
        let cfg = InitConfig::for_method(Method::UmapNs, 0).unwrap();
        let y = make_init(&data(), &cfg).unwrap();
        let x = y.column(0);
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (-10.0, 10.0));
        assert!(y.coords().iter().all(|p| p[1] >= -10.0 && p[1] <= 10.0));
    }

    #[test]
    fn std_rule_is_linear() {
        let x = data();
        let mk = |s| {
            let cfg = InitConfig {
                mode: InitMode::Pca,
                scale: Some(ScaleRule::StdDev(s)),
                seed: 0,
            };
            make_init(&x, &cfg).unwrap()
        };
        let (a, b) = (mk(0.5), mk(1.0));
        for (p, q) in a.coords().iter().zip(b.coords()) {
            assert!((2.0 * p[0] - q[0]).abs() < 1e-12 && (2.0 * p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn le_needs_no_init() {
        assert!(InitConfig::for_method(Method::Le, 0).is_none());
    }

    #[test]
    fn provided_shape_mismatch_rejected() {
        let y = Embedding::new(vec![[0.0, 0.0]; 3]).unwrap();
        let cfg = InitConfig {
            mode: InitMode::Provided(y),
            scale: None,
            seed: 0,
        };
        assert!(make_init(&data(), &cfg).is_err());
    }

    #[test]
    fn random_mode_is_seeded() {
        let cfg = InitConfig::for_method(Method::Fa2, 5)
            .unwrap()
            .with_mode(InitMode::Random);
        let a = make_init(&data(), &cfg).unwrap();
        let b = make_init(&data(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!((pooled_std(&a) - 10_000.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_scale_rejected() {
        let mut cfg = InitConfig::for_method(Method::Tsne, 0).unwrap();
        cfg.scale = Some(ScaleRule::StdDev(0.0));
        assert!(make_init(&data(), &cfg).is_err());
        cfg.scale = Some(ScaleRule::Range(1.0, 1.0));
        assert!(make_init(&data(), &cfg).is_err());
    }
}
