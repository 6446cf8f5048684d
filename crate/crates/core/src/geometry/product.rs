use rayon::prelude::*;
use serde::Serialize;

use super::sphere::{project, SpherePoint};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::PairLaw;
use crate::rng::{tag, Streams};
use crate::stats::mean_se;

/// Tracks `x Π_n` as a direction and a log-norm, never forming `Π_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductAccumulator {
    pub direction: SpherePoint,
    pub log_norm: f64,
    pub steps: usize,
}

impl ProductAccumulator {
    pub fn new(x: SpherePoint) -> Self {
        ProductAccumulator {
            direction: x,
            log_norm: 0.0,
            steps: 0,
        }
    }

    /// Multiplies by `m` on the right.
    pub fn advance(&self, m: &Mat) -> Result<Self> {
        let mut next = *self;
        next.step(m)?;
        Ok(next)
    }

    /// In-place [`advance`](Self::advance); returns the increment
    /// `log |X_{n-1} M_n|`.
    pub fn step(&mut self, m: &Mat) -> Result<f64> {
        let y = m.row_action(self.direction.coords());
        let n = y.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Numerical(format!(
                "|xM| = {n} after {} steps; M = {:?}",
                self.steps,
                m.rows()
            )));
        }
        let u = n.ln();
        self.direction = project(&y)?;
        self.log_norm += u;
        self.steps += 1;
        Ok(u)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LyapunovEstimate {
    pub beta: f64,
    pub std_error: f64,
    pub n_steps: usize,
    pub n_chains: usize,
}

/// `β ≈ n^{-1} log |x Π_n|` averaged over independent chains started at `e₁`.
pub fn lyapunov<L: PairLaw>(law: &L, n_steps: usize, n_chains: usize, streams: &Streams) -> Result<LyapunovEstimate> {
    if n_steps < 1000 {
        return Err(Error::InvalidArgument(format!(
            "lyapunov needs at least 1000 steps, got {n_steps}"
        )));
    }
    if n_chains < 2 {
        return Err(Error::InvalidArgument("lyapunov needs at least 2 chains".into()));
    }
    let d = law.dimension();
    let per_chain: Vec<f64> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.rng(tag::LYAPUNOV, c as u64);
            let mut acc = ProductAccumulator::new(SpherePoint::basis(d, 0));
            for _ in 0..n_steps {
                let pair = law.draw(&mut rng)?;
                acc.step(&pair.m)?;
            }
            Ok(acc.log_norm / n_steps as f64)
        })
        .collect::<Result<_>>()?;
    let est = mean_se(&per_chain);
    Ok(LyapunovEstimate {
        beta: est.mean,
        std_error: est.std_error,
        n_steps,
        n_chains,
    })
}
