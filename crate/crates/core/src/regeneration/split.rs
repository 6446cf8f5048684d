use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;

use super::kernel::RegenKernel;
use super::MinorizationSpec;

/// Proposals allowed per residual draw before giving up.
pub const DEFAULT_RESIDUAL_BUDGET: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SplitMode {
    /// Heads: next state from `φ`; tails: from the residual kernel.
    Split,
    /// Broken variant for negative controls: coins are tossed and epochs
    /// recorded, but the state always moves by the unsplit kernel.
    NaiveCoin,
}

/// One complete cycle `[σ_k, σ_{k+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cycle {
    pub start: usize,
    pub length: usize,
    pub v_increment: f64,
    /// `U_{σ_k}`
    pub u_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct RegenTrace {
    pub minor: MinorizationSpec,
    pub mode: SplitMode,
    pub states: Vec<SpherePoint>,
    pub v: Vec<f64>,
    /// `U_{n+1} = log |X_n M_{n+1}|`, kept separately so that epochs report
    /// the drawn value rather than a difference of partial sums.
    pub increments: Vec<f64>,
    /// `J_n` for steps taken from the regeneration set, `None` elsewhere.
    pub coins: Vec<Option<bool>>,
    /// `σ_1 < σ_2 < …`
    pub epochs: Vec<usize>,
    pub cycles: Vec<Cycle>,
}

impl RegenTrace {
    pub fn n_steps(&self) -> usize {
        self.coins.len()
    }

    pub fn cycle_lengths(&self) -> Vec<usize> {
        self.cycles.iter().map(|c| c.length).collect()
    }

    /// `U_{σ_k}` for every epoch.
    pub fn u_at_epochs(&self) -> Vec<f64> {
        self.epochs.iter().map(|&s| self.increments[s - 1]).collect()
    }

    /// Every epoch satisfies `X_{σ-1} ∈ 𝔯` and `J_{σ-1} = 1`, and every
    /// heads is an epoch.
    pub fn satisfies_r5(&self) -> bool {
        let from_epochs = self
            .epochs
            .iter()
            .all(|&s| s >= 1 && self.minor.set.contains(&self.states[s - 1]) && self.coins[s - 1] == Some(true));
        let heads = self.coins.iter().filter(|c| **c == Some(true)).count();
        let increasing = self.epochs.windows(2).all(|w| w[0] < w[1]);
        from_epochs && increasing && heads == self.epochs.len()
    }

    /// Columns `n, x1.., v, coin, regen`; `coin` is empty off the set and
    /// `regen = 1` marks epochs.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let d = self.minor.dim;
        let mut header = String::from("n");
        for i in 1..=d {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header},v,coin,regen")?;
        let mut next_epoch = self.epochs.iter().peekable();
        for (n, (x, v)) in self.states.iter().zip(&self.v).enumerate() {
            write!(w, "{n}")?;
            for c in x.coords().as_slice() {
                write!(w, ",{c:.16e}")?;
            }
            let coin = match self.coins.get(n).copied().flatten() {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            let regen = if next_epoch.peek() == Some(&&n) {
                next_epoch.next();
                1
            } else {
                0
            };
            writeln!(w, ",{v:.16e},{coin},{regen}")?;
        }
        Ok(())
    }
}

/// Draw from `(P(x, ·) - p φ) / (1 - p)`.
fn residual_step<R: Rng + ?Sized>(
    kernel: &RegenKernel,
    minor: &MinorizationSpec,
    x: &SpherePoint,
    budget: usize,
    rng: &mut R,
) -> Result<(SpherePoint, f64)> {
    let p = minor.p;
    if minor.dim == 1 {
        // exact on {-1, +1}
        let plus = SpherePoint::basis(1, 0);
        let minus = plus.neg();
        let mass = |y: &SpherePoint| kernel.density(x, y) - p * minor.phi.density(y);
        let (wp, wm) = (mass(&plus), mass(&minus));
        if wp < -1e-12 || wm < -1e-12 {
            return Err(Error::MinorizationViolated(format!(
                "negative residual mass at x = {}",
                x.coords().get(0)
            )));
        }
        let (wp, wm) = (wp.max(0.0), wm.max(0.0));
        let y = if rng.random::<f64>() * (wp + wm) < wp {
            plus
        } else {
            minus
        };
        let u = kernel.increment_given(x, &y, rng)?;
        return Ok((y, u));
    }
    // accept-reject against P(x, ·): envelope 1 / (1 - p)
    for _ in 0..budget {
        let (y, u) = kernel.step(x, rng)?;
        let f = kernel.density(x, &y);
        let accept = 1.0 - p * minor.phi.density(&y) / f;
        if accept < -1e-9 {
            return Err(Error::MinorizationViolated(format!(
                "p φ exceeds the kernel density at y = {:?}",
                y.coords().as_slice()
            )));
        }
        if rng.random::<f64>() < accept {
            return Ok((y, u));
        }
    }
    Err(Error::ResidualBudget(budget))
}

/// Runs the split chain for `n_steps` from `x0`. The minorization is
/// checked against the kernel on probe grids first.
pub fn run_split_chain<R: Rng + ?Sized>(
    kernel: &RegenKernel,
    minor: &MinorizationSpec,
    x0: SpherePoint,
    n_steps: usize,
    mode: SplitMode,
    residual_budget: usize,
    rng: &mut R,
) -> Result<RegenTrace> {
    minor.check_against(kernel)?;
    if x0.dim() != minor.dim {
        return Err(Error::InvalidArgument("start point has the wrong dimension".into()));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut v = Vec::with_capacity(n_steps + 1);
    let mut increments = Vec::with_capacity(n_steps);
    let mut coins = Vec::with_capacity(n_steps);
    let mut epochs = Vec::new();
    states.push(x0);
    v.push(0.0);
    for n in 0..n_steps {
        let x = states[n];
        let (y, u) = if minor.set.contains(&x) {
            let heads = rng.random::<f64>() < minor.p;
            coins.push(Some(heads));
            if heads {
                epochs.push(n + 1);
            }
            match (mode, heads) {
                (SplitMode::Split, true) => {
                    let y = minor.phi.sample(minor.dim, rng);
                    let u = kernel.increment_given(&x, &y, rng)?;
                    (y, u)
                }
                (SplitMode::Split, false) => residual_step(kernel, minor, &x, residual_budget, rng)?,
                (SplitMode::NaiveCoin, _) => kernel.step(&x, rng)?,
            }
        } else {
            coins.push(None);
            kernel.step(&x, rng)?
        };
        states.push(y);
        v.push(v[n] + u);
        increments.push(u);
    }
    let cycles = epochs
        .windows(2)
        .map(|w| Cycle {
            start: w[0],
            length: w[1] - w[0],
            v_increment: v[w[1]] - v[w[0]],
            u_sigma: increments[w[0] - 1],
        })
        .collect();
    Ok(RegenTrace {
        minor: minor.clone(),
        mode,
        states,
        v,
        increments,
        coins,
        epochs,
        cycles,
    })
}
