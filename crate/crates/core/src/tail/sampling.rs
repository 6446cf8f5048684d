use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::PairLaw;
use crate::rng::{tag, Streams};

/// The stopping bound is tightened by this factor so that doubling the
/// depth moves a sample by far less than `tol`, even though the remainder
/// of the series is a heavy-tailed copy of `R` itself.
pub const TRUNCATION_SAFETY: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    /// Relative truncation tolerance.
    pub tol: f64,
    /// Hard cap on the number of terms per sample.
    pub max_terms: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            tol: 1e-6,
            max_terms: 100_000,
        }
    }
}

/// A sample that hit the term cap before the tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct FlaggedSample {
    pub index: usize,
    pub partial: Vector,
    pub bound: f64,
}

/// I.i.d. draws of `R = Σ_{n≥1} Π_{n-1} Q_n`.
#[derive(Clone, Debug)]
pub struct RSampleSet {
    pub dim: usize,
    /// Accepted samples in stream order.
    pub samples: Vec<Vector>,
    /// Number of terms summed for each accepted sample.
    pub depth: Vec<usize>,
    /// Bound on the next term of the series at the stopping point.
    pub residual_bound: Vec<f64>,
    pub flagged: Vec<FlaggedSample>,
    pub tol: f64,
}

impl RSampleSet {
    /// Wraps given vectors, e.g. synthetic data for diagnostics.
    pub fn from_vectors(samples: Vec<Vector>) -> Result<Self> {
        let dim = samples
            .first()
            .map(|v| v.dim())
            .ok_or_else(|| Error::InsufficientSamples("empty sample set".into()))?;
        if samples.iter().any(|v| v.dim() != dim) {
            return Err(Error::InvalidArgument("samples of mixed dimension".into()));
        }
        let n = samples.len();
        Ok(RSampleSet {
            dim,
            samples,
            depth: vec![0; n],
            residual_bound: vec![0.0; n],
            flagged: Vec::new(),
            tol: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_depth(&self) -> f64 {
        self.depth.iter().sum::<usize>() as f64 / self.depth.len().max(1) as f64
    }

    /// `x·R` for every sample.
    pub fn project(&self, x: &Vector) -> Vec<f64> {
        self.samples.iter().map(|r| x.dot(r)).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.samples.iter().map(|r| r.norm()).collect()
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> RSampleSet {
        let n = n.min(self.len());
        RSampleSet {
            dim: self.dim,
            samples: self.samples[..n].to_vec(),
            depth: self.depth[..n].to_vec(),
            residual_bound: self.residual_bound[..n].to_vec(),
            flagged: Vec::new(),
            tol: self.tol,
        }
    }
}

/// Running `Π_n = e^{log_scale} P`, with `P` renormalized every step.
struct ScaledProduct {
    p: Mat,
    log_scale: f64,
}

impl ScaledProduct {
    fn new(dim: usize) -> Self {
        ScaledProduct {
            p: Mat::identity(dim),
            log_scale: 0.0,
        }
    }

    fn times(&mut self, m: &Mat) -> Result<()> {
        self.p = self.p.mul(m);
        let f = self.p.frobenius();
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Numerical(format!("product norm {f}")));
        }
        self.p = self.p.scale(1.0 / f);
        self.log_scale += f.ln();
        Ok(())
    }

    fn apply(&self, q: &Vector) -> Vector {
        self.p.apply(q).scale(self.log_scale.exp())
    }

    /// Upper bound on `‖Π_n‖`.
    fn norm_bound(&self) -> f64 {
        self.log_scale.exp() * self.p.frobenius()
    }
}

enum Stop {
    Tolerance { tol: f64, max_terms: usize },
    Depth(usize),
}

fn one_sample<L: PairLaw, R: Rng + ?Sized>(
    law: &L,
    stop: &Stop,
    q_scale: f64,
    rng: &mut R,
) -> Result<(Vector, usize, f64, bool)> {
    let mut s = Vector::zeros(law.dimension());
    let mut p = ScaledProduct::new(law.dimension());
    let mut n = 0;
    loop {
        let pair = law.draw(rng)?;
        s = s.add(&p.apply(&pair.q));
        p.times(&pair.m)?;
        n += 1;
        let bound = p.norm_bound() * q_scale;
        if !s.is_finite() {
            return Err(Error::Numerical(format!("partial sum overflowed after {n} terms")));
        }
        match *stop {
            Stop::Depth(d) if n >= d => return Ok((s, n, bound, false)),
            Stop::Depth(_) => {}
            Stop::Tolerance { tol, max_terms } => {
                if bound <= tol * TRUNCATION_SAFETY * s.norm().max(q_scale) {
                    return Ok((s, n, bound, false));
                }
                if n >= max_terms {
                    return Ok((s, n, bound, true));
                }
            }
        }
    }
}

fn sample_with<L: PairLaw>(law: &L, stop: Stop, n_samples: usize, streams: &Streams, tol: f64) -> Result<RSampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let q_scale = law.q_scale().max(f64::MIN_POSITIVE);
    let draws: Vec<(Vector, usize, f64, bool)> = (0..n_samples)
        .into_par_iter()
        .map(|i| one_sample(law, &stop, q_scale, &mut streams.rng(tag::R_SAMPLES, i as u64)))
        .collect::<Result<_>>()?;
    let mut out = RSampleSet {
        dim: law.dimension(),
        samples: Vec::with_capacity(n_samples),
        depth: Vec::with_capacity(n_samples),
        residual_bound: Vec::with_capacity(n_samples),
        flagged: Vec::new(),
        tol,
    };
    for (index, (s, n, bound, capped)) in draws.into_iter().enumerate() {
        if capped {
            out.flagged.push(FlaggedSample {
                index,
                partial: s,
                bound,
            });
        } else {
            out.samples.push(s);
            out.depth.push(n);
            out.residual_bound.push(bound);
        }
    }
    Ok(out)
}

/// Draws `n_samples` copies of `R`, each from its own stream, stopping when
/// the next-term bound `‖Π_n‖ · q_scale` falls below
/// `tol · TRUNCATION_SAFETY · max(|S_n|, q_scale)`. Samples hitting the cap
/// are moved to `flagged`.
pub fn sample_r<L: PairLaw>(
    law: &L,
    cfg: &TruncationConfig,
    n_samples: usize,
    streams: &Streams,
) -> Result<RSampleSet> {
    if !(cfg.tol > 0.0) || cfg.max_terms == 0 {
        return Err(Error::InvalidArgument(
            "truncation tol and max_terms must be positive".into(),
        ));
    }
    sample_with(
        law,
        Stop::Tolerance {
            tol: cfg.tol,
            max_terms: cfg.max_terms,
        },
        n_samples,
        streams,
        cfg.tol,
    )
}

/// Like [`sample_r`] but sums exactly `depth` terms; on the same streams the
/// first terms coincide with those of [`sample_r`].
pub fn sample_r_fixed_depth<L: PairLaw>(
    law: &L,
    depth: usize,
    n_samples: usize,
    streams: &Streams,
) -> Result<RSampleSet> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be positive".into()));
    }
    sample_with(law, Stop::Depth(depth), n_samples, streams, 0.0)
}

/// Sample `index` of [`sample_r`] recomputed at a fixed depth.
pub fn resample_at_depth<L: PairLaw>(law: &L, index: usize, depth: usize, streams: &Streams) -> Result<Vector> {
    let q_scale = law.q_scale().max(f64::MIN_POSITIVE);
    one_sample(
        law,
        &Stop::Depth(depth),
        q_scale,
        &mut streams.rng(tag::R_SAMPLES, index as u64),
    )
    .map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, Family, ModelSpec, QLaw};

    fn contraction(a: f64) -> ModelSpec {
        ModelSpec {
            dimension: 1,
            kappa0: 1.0,
            family: Family::ScalarTwoPoint {
                atoms: vec![a],
                weights: vec![1.0],
            },
            q: QLaw::Constant {
                value: Vector::from_slice(&[1.0]),
            },
        }
    }

    #[test]
    fn geometric_series() {
        let set = sample_r(&contraction(0.5), &TruncationConfig::default(), 100, &Streams::new(1)).unwrap();
        for s in &set.samples {
            assert!((s.get(0) - 2.0).abs() < 1e-6 * 2.0);
        }
        assert!(set.flagged.is_empty());
    }

    #[test]
    fn cap_flags_samples() {
        let cfg = TruncationConfig {
            tol: 1e-6,
            max_terms: 5,
        };
        let set = sample_r(&contraction(0.9), &cfg, 10, &Streams::new(1)).unwrap();
        assert_eq!(set.flagged.len(), 10);
        assert!(set.samples.is_empty());
    }

    #[test]
    fn mean_matches_fixed_point_identity() {
        // M ∈ {1.2, 0.5} w.p. {0.3, 0.7}: E M = 0.71, E M² < 1 so R has finite
        // variance; E R = 1 / (1 - E M)
        let mut spec = presets::two_point();
        spec.family = Family::ScalarTwoPoint {
            atoms: vec![1.2, 0.5],
            weights: vec![0.3, 0.7],
        };
        let set = sample_r(&spec, &TruncationConfig::default(), 100_000, &Streams::new(2)).unwrap();
        let v: Vec<f64> = set.samples.iter().map(|s| s.get(0)).collect();
        let m = crate::stats::mean_se(&v);
        assert!((m.mean - 1.0 / 0.29).abs() < 4.0 * m.std_error, "{m:?}");
    }
}
