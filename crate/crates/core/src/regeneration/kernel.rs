use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{project, GridFunction, SpherePoint};
use crate::linalg::{Mat, Vector};
use crate::model::sample::haar_rotation;
use crate::model::spec::{Family, RotationLaw, ScaleLaw};
use crate::model::ModelSpec;
use crate::stats::normal_cdf;

/// Total mass of the reference measure on the sphere: counting measure on
/// `{±1}` for `d = 1`, arc length for `d = 2`, area for `d = 3`.
pub fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// A direction kernel `P(x, dy)` with a density against the reference
/// measure and the conditional law of the increment `log |xM|` given `y`.
#[derive(Clone, Debug)]
pub enum RegenKernel {
    /// `d = 1` tabulated law, optionally κ-shifted: `P(x, {y}) ∝ Σ_{sign(xm) = y} w_m |m|^κ r(y)`.
    Tabulated {
        atoms: Vec<(f64, f64)>,
        kappa: f64,
        /// `r(-1)`, `r(+1)`
        r: [f64; 2],
    },
    /// `M = A·O` with Haar `O`: the next direction is uniform and independent
    /// of the increment, whose law is that of `log A` tilted by `A^κ`.
    HaarSimilarity { dim: usize, scale: ScaleLaw, kappa: f64 },
    /// `d = 1` with a positive scale and no sign change: `X_n` never moves.
    ScalarScale { scale: ScaleLaw, kappa: f64 },
    /// Base kernel of `M = Γ₀ + σG`: `xM ~ N(xΓ₀, σ² I)` for unit `x`. The
    /// condition-number conditioning of the model is ignored here.
    GaussianPerturbed { dim: usize, gamma0: Mat, sigma: f64 },
}

fn sign_index(y: f64) -> usize {
    usize::from(y > 0.0)
}

impl RegenKernel {
    /// The kernel of `(X_n)` under the original law.
    pub fn base(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if let Family::GaussianPerturbed { gamma0, sigma, .. } = &spec.family {
            return Ok(RegenKernel::GaussianPerturbed {
                dim: spec.dimension,
                gamma0: *gamma0,
                sigma: *sigma,
            });
        }
        Self::tilted(spec, 0.0, None)
    }

    /// The κ-shifted kernel, for families where its density is explicit.
    pub fn shifted(spec: &ModelSpec, kappa: f64, r: &GridFunction) -> Result<Self> {
        spec.validate()?;
        Self::tilted(spec, kappa, Some(r))
    }

    fn tilted(spec: &ModelSpec, kappa: f64, r: Option<&GridFunction>) -> Result<Self> {
        if spec.dimension == 1 {
            if let Some(atoms) = spec.m_atoms() {
                let r = match r {
                    Some(r) => [
                        r.interpolate(&SpherePoint::basis(1, 0).neg()),
                        r.interpolate(&SpherePoint::basis(1, 0)),
                    ],
                    None => [1.0, 1.0],
                };
                return Ok(RegenKernel::Tabulated {
                    atoms: atoms.iter().map(|(m, w)| (m.get(0, 0), *w)).collect(),
                    kappa,
                    r,
                });
            }
        }
        match spec.similarity_parts() {
            Some((scale, RotationLaw::Haar)) => {
                if let Some(r) = r {
                    if r.min() != r.max() {
                        return Err(Error::InvalidArgument(
                            "a Haar similarity has a constant eigenfunction".into(),
                        ));
                    }
                }
                Ok(RegenKernel::HaarSimilarity {
                    dim: spec.dimension,
                    scale,
                    kappa,
                })
            }
            Some((scale, RotationLaw::Identity)) if spec.dimension == 1 => Ok(RegenKernel::ScalarScale { scale, kappa }),
            _ => Err(Error::Unsupported(
                "explicit split-chain kernels exist for d = 1 tabulated laws, Haar similarities and the base Gaussian-perturbed law".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RegenKernel::Tabulated { .. } | RegenKernel::ScalarScale { .. } => 1,
            RegenKernel::HaarSimilarity { dim, .. } | RegenKernel::GaussianPerturbed { dim, .. } => *dim,
        }
    }

    /// Next-state probabilities on `{-1, +1}` from `x`, for tabulated kernels.
    fn tabulated_probs(&self, x: &SpherePoint) -> Option<[f64; 2]> {
        let RegenKernel::Tabulated { atoms, kappa, r } = self else {
            return None;
        };
        let xs = x.coords().get(0);
        let mut p = [0.0; 2];
        for &(m, w) in atoms {
            let y = sign_index(xs * m);
            p[y] += w * m.abs().powf(*kappa) * r[y];
        }
        let total = p[0] + p[1];
        Some([p[0] / total, p[1] / total])
    }

    /// One unsplit step: `((xM)^~, log |xM|)`.
    pub fn step<R: Rng + ?Sized>(&self, x: &SpherePoint, rng: &mut R) -> Result<(SpherePoint, f64)> {
        match self {
            RegenKernel::Tabulated { atoms, kappa, r } => {
                let xs = x.coords().get(0);
                let w: Vec<f64> = atoms
                    .iter()
                    .map(|&(m, w)| w * m.abs().powf(*kappa) * r[sign_index(xs * m)])
                    .collect();
                let total: f64 = w.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = atoms.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        pick = i;
                        break;
                    }
                    u -= wi;
                }
                let m = atoms[pick].0;
                Ok((project(&Vector::from_slice(&[xs * m]))?, m.abs().ln()))
            }
            RegenKernel::HaarSimilarity { dim, scale, kappa } => {
                let o = haar_rotation(*dim, rng);
                let y = project(&o.row_action(x.coords()))?;
                Ok((y, tilted_log_scale(scale, *kappa, rng)))
            }
            RegenKernel::ScalarScale { scale, kappa } => Ok((*x, tilted_log_scale(scale, *kappa, rng))),
            RegenKernel::GaussianPerturbed { dim, gamma0, sigma } => {
                let mean = gamma0.row_action(x.coords());
                let mut z = mean;
                for i in 0..*dim {
                    let g: f64 = StandardNormal.sample(rng);
                    z.set(i, mean.get(i) + sigma * g);
                }
                Ok((project(&z)?, z.norm().ln()))
            }
        }
    }

    /// Density of `P(x, ·)` at `y` against the reference measure.
    pub fn density(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        match self {
            RegenKernel::Tabulated { .. } => self.tabulated_probs(x).unwrap()[sign_index(y.coords().get(0))],
            RegenKernel::HaarSimilarity { dim, .. } => 1.0 / sphere_measure(*dim),
            RegenKernel::ScalarScale { .. } => f64::from(u8::from(x.distance(y) < 1e-12)),
            RegenKernel::GaussianPerturbed { dim, gamma0, sigma } => {
                let m = gamma0.row_action(x.coords());
                let a = y.coords().dot(&m);
                let b2 = (m.dot(&m) - a * a).max(0.0);
                let s2 = sigma * sigma;
                let tail = normal_cdf(a / sigma);
                let ga = (-a * a / (2.0 * s2)).exp();
                let root = (2.0 * PI).sqrt();
                match dim {
                    1 => tail,
                    2 => (-b2 / (2.0 * s2)).exp() / (2.0 * PI * s2) * (s2 * ga + a * sigma * root * tail),
                    _ => {
                        (2.0 * PI * s2).powf(-1.5)
                            * (-b2 / (2.0 * s2)).exp()
                            * sigma
                            * ((a * a + s2) * root * tail + a * sigma * ga)
                    }
                }
            }
        }
    }

    /// Draws `log |xM|` from its conditional law given `(xM)^~ = y`.
    pub fn increment_given<R: Rng + ?Sized>(&self, x: &SpherePoint, y: &SpherePoint, rng: &mut R) -> Result<f64> {
        match self {
            RegenKernel::Tabulated { atoms, kappa, r } => {
                let xs = x.coords().get(0);
                let target = sign_index(y.coords().get(0));
                let cands: Vec<(f64, f64)> = atoms
                    .iter()
                    .filter(|(m, _)| sign_index(xs * m) == target)
                    .map(|&(m, w)| (m, w * m.abs().powf(*kappa) * r[target]))
                    .collect();
                let total: f64 = cands.iter().map(|c| c.1).sum();
                if !(total > 0.0) {
                    return Err(Error::MinorizationViolated(format!(
                        "state {} is unreachable from {}",
                        y.coords().get(0),
                        xs
                    )));
                }
                let mut u = rng.random::<f64>() * total;
                for (m, w) in &cands {
                    if u < *w {
                        return Ok(m.abs().ln());
                    }
                    u -= w;
                }
                Ok(cands.last().unwrap().0.abs().ln())
            }
            RegenKernel::HaarSimilarity { scale, kappa, .. } | RegenKernel::ScalarScale { scale, kappa } => {
                Ok(tilted_log_scale(scale, *kappa, rng))
            }
            RegenKernel::GaussianPerturbed { dim, gamma0, sigma } => {
                // s = |xM| has density ∝ s^{d-1} exp(-(s - a)²/2σ²) on s > 0;
                // propose from N(s*, σ²) at the mode s*
                let a = y.coords().dot(&gamma0.row_action(x.coords()));
                let k = (*dim - 1) as f64;
                let s2 = sigma * sigma;
                let mode = if k == 0.0 {
                    a.max(0.0)
                } else {
                    0.5 * (a + (a * a + 4.0 * k * s2).sqrt())
                };
                let log_target = |s: f64| k * s.ln() - (s - a).powi(2) / (2.0 * s2);
                let log_prop = |s: f64| -(s - mode).powi(2) / (2.0 * s2);
                // log(target/proposal) is concave with its maximum at the mode
                let top = mode.max(f64::MIN_POSITIVE);
                let log_bound = log_target(top) - log_prop(top);
                for _ in 0..100_000 {
                    let g: f64 = StandardNormal.sample(rng);
                    let s = mode + sigma * g;
                    if s <= 0.0 {
                        continue;
                    }
                    let log_ratio = log_target(s) - log_prop(s) - log_bound;
                    if rng.random::<f64>().ln() < log_ratio {
                        return Ok(s.ln());
                    }
                }
                Err(Error::Numerical("increment sampler did not accept".into()))
            }
        }
    }
}

fn tilted_log_scale<R: Rng + ?Sized>(scale: &ScaleLaw, kappa: f64, rng: &mut R) -> f64 {
    match *scale {
        ScaleLaw::Constant { value } => value.ln(),
        ScaleLaw::Lognormal { mu, sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            mu + kappa * sigma * sigma + sigma * z
        }
    }
}
