//! Stopped pairs `(Π_τ, Q^τ)`: the stationary solution also solves the
//! fixed-point equation driven by these, for any stopping time `τ`
//! independent of the future, in particular a geometric one.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::sample::{PairLaw, PairSample};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stopping {
    /// `P(τ = n) = (1-p)^{n-1} p`, `n ≥ 1`.
    Geometric {
        p: f64,
    },
    FixedN {
        n: usize,
    },
}

impl Stopping {
    fn check(&self) -> Result<()> {
        match *self {
            Stopping::Geometric { p } if !(p > 0.0 && p < 1.0) => Err(Error::InvalidArgument(format!(
                "geometric stopping needs p in (0,1), got {p}"
            ))),
            Stopping::FixedN { n: 0 } => Err(Error::InvalidArgument("fixed stopping needs n >= 1".into())),
            _ => Ok(()),
        }
    }

    fn draw_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            Stopping::Geometric { p } => {
                // number of failures before the first success
                1 + Geometric::new(p).expect("checked p").sample(rng) as usize
            }
            Stopping::FixedN { n } => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppedPairSample {
    /// `Π_τ = M_1 ⋯ M_τ`
    pub pi_tau: Mat,
    /// `Q^τ = Σ_{k ≤ τ} Π_{k-1} Q_k`
    pub q_tau: Vector,
    pub tau: usize,
}

pub fn sample_stopped_pair<R: Rng + ?Sized>(
    spec: &ModelSpec,
    stopping: Stopping,
    rng: &mut R,
) -> Result<StoppedPairSample> {
    stopping.check()?;
    let tau = stopping.draw_tau(rng);
    let d = spec.dimension;
    let mut pi = Mat::identity(d);
    let mut q = Vector::zeros(d);
    for _ in 0..tau {
        let pair = spec.draw(rng)?;
        q = q.add(&pi.apply(&pair.q));
        pi = pi.mul(&pair.m);
    }
    Ok(StoppedPairSample {
        pi_tau: pi,
        q_tau: q,
        tau,
    })
}

/// The law of `(Π_τ, Q^τ)` as a [`PairLaw`].
#[derive(Clone, Debug)]
pub struct StoppedLaw {
    pub spec: ModelSpec,
    pub stopping: Stopping,
}

impl StoppedLaw {
    pub fn new(spec: ModelSpec, stopping: Stopping) -> Result<Self> {
        stopping.check()?;
        spec.validate()?;
        Ok(Self { spec, stopping })
    }
}

impl PairLaw for StoppedLaw {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairSample> {
        let s = sample_stopped_pair(&self.spec, self.stopping, rng)?;
        Ok(PairSample {
            m: s.pi_tau,
            q: s.q_tau,
        })
    }

    fn q_scale(&self) -> f64 {
        self.spec.q_scale()
    }
}
