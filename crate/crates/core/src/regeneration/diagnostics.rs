use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{SphereGrid, SpherePoint};
use crate::rng::{tag, Streams};
use crate::stats::{
    chi_square_geometric, ks_test, lag1_autocorrelation, linear_fit, mean_se, Autocorrelation, ChiSquareTest, KsTest,
    MeanEstimate,
};

use super::split::RegenTrace;
use super::{Phi, RegenSet};

pub const MIN_CYCLES: usize = 200;
pub const MIN_BOUND_CYCLES: usize = 100;

/// Geometric fit to the return times to `𝔯`.
#[derive(Clone, Debug, Serialize)]
pub struct GeometricFit {
    pub n_returns: usize,
    pub mean: f64,
    /// `1 / mean`
    pub p_hat: f64,
    /// `exp` of the slope of `log P̂(T > k)` over `k` where at least ten
    /// returns exceed `k`; `NaN` when fewer than two such `k`.
    pub tail_rate: f64,
    /// `max_k |P̂(T > k) - (1 - p̂)^k|`
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegenDiagnostics {
    pub n_cycles: usize,
    pub mean_length: MeanEstimate,
    /// Cycle lengths, first half against second half.
    pub ks_halves: KsTest,
    pub autocorrelation: Autocorrelation,
    /// `X_{σ_k}` against fresh draws from `φ`, on a one-dimensional projection.
    pub phi_check: KsTest,
    pub return_times: GeometricFit,
    /// Against `Geometric(p)`, for whole-sphere minorization only.
    pub chi_square: Option<ChiSquareTest>,
    pub r5: bool,
    pub pass: bool,
}

/// Scalar summary of a state used by the `φ`-check: the coordinate for
/// `d = 1`, the signed angle from the reference for `d = 2`, the cosine to
/// the reference for `d = 3`.
fn projection(reference: &SpherePoint, y: &SpherePoint) -> f64 {
    match y.dim() {
        1 => y.coords().get(0),
        2 => {
            let (r, v) = (reference.coords(), y.coords());
            let cross = r.get(0) * v.get(1) - r.get(1) * v.get(0);
            cross.atan2(r.dot(v))
        }
        _ => reference.coords().dot(y.coords()),
    }
}

fn return_time_fit(trace: &RegenTrace) -> GeometricFit {
    let visits: Vec<usize> = (0..trace.n_steps())
        .filter(|&n| trace.minor.set.contains(&trace.states[n]))
        .collect();
    let gaps: Vec<usize> = visits.windows(2).map(|w| w[1] - w[0]).collect();
    let n = gaps.len();
    if n == 0 {
        return GeometricFit {
            n_returns: 0,
            mean: f64::NAN,
            p_hat: f64::NAN,
            tail_rate: f64::NAN,
            max_deviation: f64::NAN,
        };
    }
    let mean = gaps.iter().sum::<usize>() as f64 / n as f64;
    let p_hat = 1.0 / mean;
    let kmax = *gaps.iter().max().unwrap();
    let mut exceed = vec![0usize; kmax + 1];
    for &g in &gaps {
        // g > k for k in 0..g
        exceed[g - 1] += 1;
    }
    for k in (0..kmax).rev() {
        exceed[k] += exceed[k + 1];
    }
    let (mut ks, mut logs) = (Vec::new(), Vec::new());
    let mut max_deviation: f64 = 0.0;
    for (k, &e) in exceed.iter().enumerate().skip(1) {
        let s = e as f64 / n as f64;
        max_deviation = max_deviation.max((s - (1.0 - p_hat).powi(k as i32)).abs());
        if e >= 10 {
            ks.push(k as f64);
            logs.push(s.ln());
        }
    }
    let tail_rate = if ks.len() >= 2 {
        linear_fit(&ks, &logs).0.exp()
    } else {
        f64::NAN
    };
    GeometricFit {
        n_returns: n,
        mean,
        p_hat,
        tail_rate,
        max_deviation,
    }
}

/// Checks the regenerative structure of a split-chain trace.
pub fn validate_regeneration(trace: &RegenTrace, streams: &Streams) -> Result<RegenDiagnostics> {
    let n_cycles = trace.cycles.len();
    if n_cycles < MIN_CYCLES {
        return Err(Error::TooFewCycles {
            needed: MIN_CYCLES,
            have: n_cycles,
        });
    }
    let lengths: Vec<f64> = trace.cycles.iter().map(|c| c.length as f64).collect();
    let half = n_cycles / 2;
    let ks_halves = ks_test(&lengths[..half], &lengths[half..]);
    let autocorrelation = lag1_autocorrelation(&lengths);

    let dim = trace.minor.dim;
    let reference = match &trace.minor.phi {
        Phi::UniformBall { center, .. } => *center,
        _ => SpherePoint::basis(dim, 0),
    };
    let observed: Vec<f64> = trace
        .epochs
        .iter()
        .map(|&s| projection(&reference, &trace.states[s]))
        .collect();
    let mut rng = streams.rng(tag::DIAGNOSTICS, 0);
    let fresh: Vec<f64> = (0..observed.len())
        .map(|_| projection(&reference, &trace.minor.phi.sample(dim, &mut rng)))
        .collect();
    let phi_check = ks_test(&observed, &fresh);

    let chi_square =
        (trace.minor.set == RegenSet::WholeSphere).then(|| chi_square_geometric(&trace.cycle_lengths(), trace.minor.p));
    let r5 = trace.satisfies_r5();
    let pass =
        ks_halves.pass && autocorrelation.pass && phi_check.pass && r5 && chi_square.as_ref().is_none_or(|c| c.pass);
    Ok(RegenDiagnostics {
        n_cycles,
        mean_length: mean_se(&lengths),
        ks_halves,
        autocorrelation,
        phi_check,
        return_times: return_time_fit(trace),
        chi_square,
        r5,
        pass,
    })
}

/// Observed range of `U_{σ_k}` over complete cycles, with running extremes.
#[derive(Clone, Debug, Serialize)]
pub struct IncrementBounds {
    pub n_cycles: usize,
    pub s_low: f64,
    pub s_high: f64,
    pub running_min: Vec<f64>,
    pub running_max: Vec<f64>,
}

pub fn regeneration_increment_bounds(trace: &RegenTrace) -> Result<IncrementBounds> {
    let n_cycles = trace.cycles.len();
    if n_cycles < MIN_BOUND_CYCLES {
        return Err(Error::TooFewCycles {
            needed: MIN_BOUND_CYCLES,
            have: n_cycles,
        });
    }
    let mut running_min = Vec::with_capacity(n_cycles);
    let mut running_max = Vec::with_capacity(n_cycles);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &trace.cycles {
        lo = lo.min(c.u_sigma);
        hi = hi.max(c.u_sigma);
        running_min.push(lo);
        running_max.push(hi);
    }
    Ok(IncrementBounds {
        n_cycles,
        s_low: lo,
        s_high: hi,
        running_min,
        running_max,
    })
}

/// Renewal-reward occupation estimate over complete cycles.
#[derive(Clone, Debug)]
pub struct OccupationEstimate {
    pub grid: Arc<SphereGrid>,
    pub pi: Vec<f64>,
    /// Delta-method standard error of the ratio estimator over i.i.d. cycles.
    pub pi_se: Vec<f64>,
    pub n_cycles: usize,
}

/// `π̂_k = Σ_cycles (visits to bin k) / Σ_cycles length`.
pub fn occupation(trace: &RegenTrace, grid: Arc<SphereGrid>) -> Result<OccupationEstimate> {
    let n_cycles = trace.cycles.len();
    if n_cycles < 2 {
        return Err(Error::TooFewCycles {
            needed: 2,
            have: n_cycles,
        });
    }
    let bins = grid.len();
    let (mut sc, mut sc2, mut scl) = (vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]);
    let (mut sl, mut sl2) = (0.0, 0.0);
    let mut idx = Vec::new();
    for c in &trace.cycles {
        let l = c.length as f64;
        sl += l;
        sl2 += l * l;
        idx.clear();
        idx.extend(
            trace.states[c.start..c.start + c.length]
                .iter()
                .map(|x| grid.bin_index(x)),
        );
        idx.sort_unstable();
        for run in idx.chunk_by(|a, b| a == b) {
            let k = run[0];
            let cnt = run.len() as f64;
            sc[k] += cnt;
            sc2[k] += cnt * cnt;
            scl[k] += cnt * l;
        }
    }
    let n = n_cycles as f64;
    let mean_l = sl / n;
    let mut pi = vec![0.0; bins];
    let mut pi_se = vec![0.0; bins];
    for k in 0..bins {
        let p = sc[k] / sl;
        // Var(c - p L) per cycle
        let var = ((sc2[k] - 2.0 * p * scl[k] + p * p * sl2) / n).max(0.0);
        pi[k] = p;
        pi_se[k] = (var / (n - 1.0)).sqrt() / mean_l;
    }
    Ok(OccupationEstimate {
        grid,
        pi,
        pi_se,
        n_cycles,
    })
}
