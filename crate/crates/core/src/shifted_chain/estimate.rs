use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ShiftedStepSampler;
use crate::error::{Error, Result};
use crate::geometry::{project, SphereGrid, SpherePoint};
use crate::model::PairLaw;
use crate::rng::{tag, Streams};
use crate::stats::{batch_means, MeanEstimate};

const BATCHES: usize = 50;
pub const MIN_BURN_IN: usize = 1000;
pub const MIN_STEPS_AFTER_BURN_IN: usize = 10_000;

/// A path `(X_n, V_n)` of the shifted chain, `n = 0..=n_steps`.
#[derive(Clone, Debug)]
pub struct ShiftedChainTrace {
    pub states: Vec<SpherePoint>,
    /// `V_n = log |x Π_n|`, with `V_0 = 0`.
    pub v: Vec<f64>,
    pub burn_in: usize,
    /// Effective sample size of the post-burn-in increments.
    pub ess: f64,
}

impl ShiftedChainTrace {
    pub fn increments(&self) -> Vec<f64> {
        self.v.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let d = self.states.first().map_or(0, |s| s.dim());
        let mut header = String::from("n");
        for i in 1..=d {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header},v")?;
        for (n, (x, v)) in self.states.iter().zip(&self.v).enumerate() {
            write!(w, "{n}")?;
            for c in x.coords().as_slice() {
                write!(w, ",{c:.16e}")?;
            }
            writeln!(w, ",{v:.16e}")?;
        }
        Ok(())
    }
}

fn effective_sample_size(u: &[f64]) -> f64 {
    let n = u.len();
    if n < 2 * BATCHES {
        return n as f64;
    }
    let iid = crate::stats::mean_se(u).std_error;
    let bm = batch_means(u, BATCHES).std_error;
    if bm > 0.0 {
        (n as f64 * (iid / bm).powi(2)).min(n as f64)
    } else {
        n as f64
    }
}

/// Runs the shifted chain for `n_steps` steps from `x0`.
pub fn run_chain<R: Rng + ?Sized>(
    sampler: &ShiftedStepSampler,
    x0: SpherePoint,
    n_steps: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<ShiftedChainTrace> {
    if burn_in > n_steps {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burn_in} exceeds trace length {n_steps}"
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut v = Vec::with_capacity(n_steps + 1);
    states.push(x0);
    v.push(0.0);
    let mut x = x0;
    let mut acc = 0.0;
    for _ in 0..n_steps {
        let (y, u) = sampler.step(&x, rng)?;
        acc += u;
        states.push(y);
        v.push(acc);
        x = y;
    }
    let u: Vec<f64> = v[burn_in..].windows(2).map(|w| w[1] - w[0]).collect();
    Ok(ShiftedChainTrace {
        ess: effective_sample_size(&u),
        states,
        v,
        burn_in,
    })
}

/// `π̂` on a grid and the drift `α̂`.
#[derive(Clone, Debug)]
pub struct StationaryEstimate {
    pub grid: Arc<SphereGrid>,
    /// Bin masses, symmetrized under `x ↦ -x`; sum to 1.
    pub pi: Vec<f64>,
    /// Batch-means standard error of each bin mass.
    pub pi_se: Vec<f64>,
    /// Raw bin counts of the post-burn-in states.
    pub counts: Vec<u64>,
    pub alpha: f64,
    pub alpha_se: f64,
    /// Slope of `V` over the last quarter of the trace, with its batch error.
    pub last_quarter_alpha: f64,
    pub last_quarter_se: f64,
    pub n_used: usize,
    pub burn_in: usize,
    pub ess: f64,
}

/// JSON summary of a [`StationaryEstimate`].
#[derive(Clone, Debug, Serialize)]
pub struct StationarySummary {
    pub alpha: f64,
    pub alpha_se: f64,
    pub last_quarter_alpha: f64,
    pub last_quarter_se: f64,
    pub n_used: usize,
    pub burn_in: usize,
    pub ess: f64,
    pub grid_points: usize,
    pub pi_min: f64,
    pub pi_max: f64,
}

impl StationaryEstimate {
    pub fn summary(&self) -> StationarySummary {
        StationarySummary {
            alpha: self.alpha,
            alpha_se: self.alpha_se,
            last_quarter_alpha: self.last_quarter_alpha,
            last_quarter_se: self.last_quarter_se,
            n_used: self.n_used,
            burn_in: self.burn_in,
            ess: self.ess,
            grid_points: self.grid.len(),
            pi_min: self.pi.iter().copied().fold(f64::INFINITY, f64::min),
            pi_max: self.pi.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Histogram CSV: bin coordinates, mass, standard error, raw count.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let d = self.grid.dim();
        let mut header = String::from("bin");
        for i in 1..=d {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header},pi,pi_se,count")?;
        for k in 0..self.grid.len() {
            write!(w, "{k}")?;
            for c in self.grid.point(k).coords().as_slice() {
                write!(w, ",{c:.16e}")?;
            }
            writeln!(w, ",{:.16e},{:.16e},{}", self.pi[k], self.pi_se[k], self.counts[k])?;
        }
        Ok(())
    }

    /// `|α̂ - α̂_last quarter| / (combined batch error)`.
    pub fn drift_stability_z(&self) -> f64 {
        (self.alpha - self.last_quarter_alpha).abs() / self.last_quarter_se.hypot(self.alpha_se)
    }
}

/// Symmetrized bin masses of a sequence of bin indices.
fn symmetrized_masses(grid: &SphereGrid, bins: &[usize]) -> Vec<f64> {
    let mut c = vec![0u64; grid.len()];
    for &b in bins {
        c[b] += 1;
    }
    let n = bins.len() as f64;
    (0..grid.len())
        .map(|k| (c[k] + c[grid.antipode(k)]) as f64 / (2.0 * n))
        .collect()
}

/// Runs the chain and bins it on `grid`. `burn_in = None` uses
/// `max(10% of n_steps, 1000)`.
pub fn estimate_pi_alpha<R: Rng + ?Sized>(
    sampler: &ShiftedStepSampler,
    grid: Arc<SphereGrid>,
    n_steps: usize,
    burn_in: Option<usize>,
    rng: &mut R,
) -> Result<StationaryEstimate> {
    if grid.dim() != sampler.spec().dimension {
        return Err(Error::InvalidArgument("grid dimension does not match the model".into()));
    }
    let burn = burn_in.unwrap_or((n_steps / 10).max(MIN_BURN_IN));
    if n_steps < burn + MIN_STEPS_AFTER_BURN_IN {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_STEPS_AFTER_BURN_IN} steps after a burn-in of {burn}, got {n_steps} in total"
        )));
    }
    let trace = run_chain(sampler, SpherePoint::basis(grid.dim(), 0), n_steps, burn, rng)?;
    Ok(stationary_from_trace(&trace, grid))
}

/// Bins an existing trace on `grid`; used to read `π̂` at several resolutions
/// from one run.
pub fn stationary_from_trace(trace: &ShiftedChainTrace, grid: Arc<SphereGrid>) -> StationaryEstimate {
    let burn = trace.burn_in;
    let n_steps = trace.v.len() - 1;
    let u: Vec<f64> = trace.v[burn..].windows(2).map(|w| w[1] - w[0]).collect();
    let n = u.len();
    let alpha_est = batch_means(&u, BATCHES);
    let alpha = (trace.v[n_steps] - trace.v[burn]) / n as f64;
    let q = &u[n - n / 4..];
    let last = batch_means(q, BATCHES);

    let bins: Vec<usize> = trace.states[burn + 1..].iter().map(|x| grid.bin_index(x)).collect();
    let mut counts = vec![0u64; grid.len()];
    for &b in &bins {
        counts[b] += 1;
    }
    let pi = symmetrized_masses(&grid, &bins);
    // batch means of the bin masses
    let size = bins.len() / BATCHES;
    let batch_pis: Vec<Vec<f64>> = bins
        .chunks_exact(size)
        .take(BATCHES)
        .map(|c| symmetrized_masses(&grid, c))
        .collect();
    let pi_se = (0..grid.len())
        .map(|k| {
            let vals: Vec<f64> = batch_pis.iter().map(|b| b[k]).collect();
            crate::stats::mean_se(&vals).std_error
        })
        .collect();
    StationaryEstimate {
        grid,
        pi,
        pi_se,
        counts,
        alpha,
        alpha_se: alpha_est.std_error,
        last_quarter_alpha: last.mean,
        last_quarter_se: last.std_error,
        n_used: n,
        burn_in: burn,
        ess: trace.ess,
    }
}

impl StationaryEstimate {
    /// Errors when `α̂ ≤ 0` beyond three standard errors.
    pub fn check_drift(&self) -> Result<()> {
        if self.alpha + 3.0 * self.alpha_se <= 0.0 {
            return Err(Error::NonPositiveDrift {
                alpha: self.alpha,
                std_error: self.alpha_se,
            });
        }
        Ok(())
    }
}

/// `α = Σ_y π̂(y) r(y)^{-1} E |yM|^κ log |yM| r((yM)^~)`, exact for tabulated
/// laws and by `n_per_point` draws per bin otherwise. The standard error
/// combines the Monte Carlo error and the bin-mass errors of `π̂`.
pub fn drift_by_integral(
    sampler: &ShiftedStepSampler,
    pi: &StationaryEstimate,
    n_per_point: usize,
    streams: &Streams,
) -> Result<MeanEstimate> {
    let spec = sampler.spec();
    let r = sampler.eigenfunction();
    let kappa = sampler.kappa();
    let atoms = spec.m_atoms();
    let grid = &pi.grid;
    let per_point: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if pi.pi[k] == 0.0 {
                return Ok((0.0, 0.0));
            }
            let y = grid.point(k);
            let ry = r.interpolate(y);
            let h = |m: &crate::linalg::Mat| -> Result<f64> {
                let z = m.row_action(y.coords());
                let norm = z.norm();
                Ok(norm.powf(kappa) * norm.ln() * r.interpolate(&project(&z)?) / ry)
            };
            if let Some(atoms) = &atoms {
                let g = atoms.iter().map(|(m, p)| Ok(p * h(m)?)).sum::<Result<f64>>()?;
                return Ok((g, 0.0));
            }
            let mut rng = streams.rng(tag::SHIFTED_CHAIN, 1_000_000 + k as u64);
            let vals: Vec<f64> = (0..n_per_point)
                .map(|_| h(&spec.draw(&mut rng)?.m))
                .collect::<Result<_>>()?;
            let e = crate::stats::mean_se(&vals);
            Ok((e.mean, e.std_error))
        })
        .collect::<Result<_>>()?;
    let mut mean = 0.0;
    let mut var = 0.0;
    for (k, (g, se)) in per_point.iter().enumerate() {
        mean += pi.pi[k] * g;
        var += (pi.pi[k] * se).powi(2) + (g * pi.pi_se[k]).powi(2);
    }
    Ok(MeanEstimate {
        mean,
        std_error: var.sqrt(),
        n: n_per_point * grid.len(),
    })
}

/// Per-bin comparison of `π̂` with the law after one more kernel step.
#[derive(Clone, Debug, Serialize)]
pub struct InvarianceCheck {
    pub n_restarts: usize,
    /// Largest `|p'_k - π̂_k| / σ_k` over bins.
    pub max_z: f64,
    pub bins_beyond_3sigma: usize,
    pub pass: bool,
}

/// Restarts `n_restarts` chains at grid points drawn from `π̂`, applies one
/// step each and compares the new bin masses with `π̂`.
pub fn invariance_check(
    sampler: &ShiftedStepSampler,
    pi: &StationaryEstimate,
    n_restarts: usize,
    streams: &Streams,
) -> Result<InvarianceCheck> {
    let grid = &pi.grid;
    let chunks = 64usize;
    let per = n_restarts.div_ceil(chunks);
    let cdf: Vec<f64> = pi
        .pi
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let bins: Vec<Vec<usize>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.rng(tag::SHIFTED_CHAIN, 2_000_000 + c as u64);
            let count = per.min(n_restarts.saturating_sub(c * per));
            (0..count)
                .map(|_| {
                    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                    let k = cdf.partition_point(|v| *v <= u).min(grid.len() - 1);
                    let (y, _) = sampler.step(grid.point(k), &mut rng)?;
                    Ok(grid.bin_index(&y))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let bins: Vec<usize> = bins.into_iter().flatten().collect();
    let after = symmetrized_masses(grid, &bins);
    let n = bins.len() as f64;
    let mut max_z: f64 = 0.0;
    let mut beyond = 0;
    #[allow(clippy::needless_range_loop)]
    for k in 0..grid.len() {
        let var = pi.pi_se[k].powi(2) + after[k] * (1.0 - after[k]) / (2.0 * n);
        let z = if var > 0.0 {
            (after[k] - pi.pi[k]).abs() / var.sqrt()
        } else if after[k] == pi.pi[k] {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
        if z > 3.0 {
            beyond += 1;
        }
    }
    Ok(InvarianceCheck {
        n_restarts: bins.len(),
        max_z,
        bins_beyond_3sigma: beyond,
        pass: beyond == 0,
    })
}
