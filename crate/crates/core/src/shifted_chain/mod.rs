//! The Markov random walk `(X_n, V_n)` under the κ-shifted kernel
//! `^κP f(x) = r(x)^{-1} E |xM|^κ f((xM)^~) r((xM)^~)`, its stationary law
//! `π` and drift `α`, and the tail of `sup_n |x Π_n|` under the original law.

mod estimate;
mod sup_tail;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{project, GridFunction, SpherePoint};
use crate::linalg::Mat;
use crate::model::sample::haar_rotation;
use crate::model::spec::{RotationLaw, ScaleLaw};
use crate::model::{ModelSpec, PairLaw};
use crate::operator::KappaSolution;

pub use estimate::{
    drift_by_integral, estimate_pi_alpha, invariance_check, run_chain, stationary_from_trace, InvarianceCheck,
    ShiftedChainTrace, StationaryEstimate, StationarySummary,
};
pub use sup_tail::{sup_tail, SupTailConfig, SupTailEstimate};

pub const MIN_PROPOSALS: usize = 100;

#[derive(Clone, Debug)]
enum StepMode {
    /// Exact tilt of a finitely supported law.
    TiltedAtoms(Vec<(Mat, f64)>),
    /// Similarity `M = A·O`: `|xM| = A` does not depend on `x`, so the tilt
    /// factorizes into an exact tilt of `A` and a reweighting of `O` by `r`.
    TiltedScale { scale: ScaleLaw, rotation: RotationLaw },
    /// Sample-weight-resample from the base law.
    Resample,
}

/// Draws steps of the κ-shifted chain.
#[derive(Clone, Debug)]
pub struct ShiftedStepSampler {
    spec: ModelSpec,
    kappa: f64,
    r: GridFunction,
    n_prop: usize,
    mode: StepMode,
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical(format!("resampling weights sum to {total}")));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap())
}

/// Normalized weights from log-weights, stable for large exponents.
fn weights_from_logs(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - top).exp()).collect()
}

impl ShiftedStepSampler {
    pub fn new(spec: &ModelSpec, solution: &KappaSolution, n_prop: usize) -> Result<Self> {
        Self::with_eigenfunction(spec, solution.kappa, solution.r.clone(), n_prop)
    }

    pub fn with_eigenfunction(spec: &ModelSpec, kappa: f64, r: GridFunction, n_prop: usize) -> Result<Self> {
        spec.validate()?;
        if n_prop < MIN_PROPOSALS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_PROPOSALS} proposals per step, got {n_prop}"
            )));
        }
        if r.min() <= 0.0 {
            return Err(Error::InvalidArgument("eigenfunction must be positive".into()));
        }
        if r.grid().dim() != spec.dimension {
            return Err(Error::InvalidArgument(
                "eigenfunction grid has the wrong dimension".into(),
            ));
        }
        let mode = if let Some(atoms) = spec.m_atoms() {
            StepMode::TiltedAtoms(atoms)
        } else if let Some((scale, rotation)) = spec.similarity_parts() {
            StepMode::TiltedScale { scale, rotation }
        } else {
            StepMode::Resample
        };
        Ok(ShiftedStepSampler {
            spec: spec.clone(),
            kappa,
            r,
            n_prop,
            mode,
        })
    }

    /// Uses sample-weight-resample even where an exact tilt exists.
    pub fn force_resampling(mut self) -> Self {
        self.mode = StepMode::Resample;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eigenfunction(&self) -> &GridFunction {
        &self.r
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_prop(&self) -> usize {
        self.n_prop
    }

    pub fn with_proposals(mut self, n_prop: usize) -> Result<Self> {
        if n_prop < MIN_PROPOSALS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_PROPOSALS} proposals per step, got {n_prop}"
            )));
        }
        self.n_prop = n_prop;
        Ok(self)
    }

    /// Probabilities of the tilted atom law at `x`, for tabulated families.
    pub fn tilted_atom_probabilities(&self, x: &SpherePoint) -> Option<Vec<f64>> {
        let StepMode::TiltedAtoms(atoms) = &self.mode else {
            return None;
        };
        let w: Vec<f64> = atoms
            .iter()
            .map(|(m, p)| {
                let y = m.row_action(x.coords());
                p * y.norm().powf(self.kappa) * self.r.interpolate(&project(&y).expect("invertible atom"))
            })
            .collect();
        let total: f64 = w.iter().sum();
        Some(w.into_iter().map(|v| v / total).collect())
    }

    /// Draws the matrix of one shifted step from `x`; returns it with the
    /// new direction and the increment `log |xM|`.
    pub fn step_matrix<R: Rng + ?Sized>(&self, x: &SpherePoint, rng: &mut R) -> Result<(Mat, SpherePoint, f64)> {
        match &self.mode {
            StepMode::TiltedAtoms(atoms) => {
                let logs: Vec<f64> = atoms
                    .iter()
                    .map(|(m, p)| {
                        let y = m.row_action(x.coords());
                        let dir = project(&y)?;
                        Ok(p.ln() + self.kappa * y.norm().ln() + self.r.interpolate(&dir).ln())
                    })
                    .collect::<Result<_>>()?;
                let i = categorical(&weights_from_logs(&logs), rng)?;
                let m = atoms[i].0;
                let y = m.row_action(x.coords());
                Ok((m, project(&y)?, y.norm().ln()))
            }
            StepMode::TiltedScale { scale, rotation } => {
                let log_a = match *scale {
                    ScaleLaw::Constant { value } => value.ln(),
                    // A^κ tilts N(μ, σ²) to N(μ + κσ², σ²)
                    ScaleLaw::Lognormal { mu, sigma } => {
                        let z: f64 = StandardNormal.sample(rng);
                        mu + self.kappa * sigma * sigma + sigma * z
                    }
                };
                let d = self.spec.dimension;
                let o = match rotation {
                    RotationLaw::Identity => Mat::identity(d),
                    RotationLaw::Angle { radians } => Mat::rotation2(*radians),
                    RotationLaw::Fixed { matrix } => *matrix,
                    // constant r leaves the Haar law untilted
                    RotationLaw::Haar if self.r.min() == self.r.max() => haar_rotation(d, rng),
                    RotationLaw::Haar => {
                        let cands: Vec<Mat> = (0..self.n_prop).map(|_| haar_rotation(d, rng)).collect();
                        let w: Vec<f64> = cands
                            .iter()
                            .map(|o| Ok(self.r.interpolate(&project(&o.row_action(x.coords()))?)))
                            .collect::<Result<_>>()?;
                        cands[categorical(&w, rng)?]
                    }
                };
                let dir = project(&o.row_action(x.coords()))?;
                Ok((o.scale(log_a.exp()), dir, log_a))
            }
            StepMode::Resample => {
                let mut cands = Vec::with_capacity(self.n_prop);
                let mut logs = Vec::with_capacity(self.n_prop);
                for _ in 0..self.n_prop {
                    let m = self.spec.draw(rng)?.m;
                    let y = m.row_action(x.coords());
                    let dir = project(&y)?;
                    let u = y.norm().ln();
                    logs.push(self.kappa * u + self.r.interpolate(&dir).ln());
                    cands.push((m, dir, u));
                }
                let i = categorical(&weights_from_logs(&logs), rng)?;
                Ok(cands[i])
            }
        }
    }

    /// One step of the shifted chain: `((xM)^~, log |xM|)`.
    pub fn step<R: Rng + ?Sized>(&self, x: &SpherePoint, rng: &mut R) -> Result<(SpherePoint, f64)> {
        self.step_matrix(x, rng).map(|(_, y, u)| (y, u))
    }
}

/// Free-function form of [`ShiftedStepSampler::step`].
pub fn shifted_step<R: Rng + ?Sized>(
    sampler: &ShiftedStepSampler,
    x: &SpherePoint,
    rng: &mut R,
) -> Result<(SpherePoint, f64)> {
    sampler.step(x, rng)
}
