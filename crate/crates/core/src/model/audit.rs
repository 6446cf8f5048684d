//! Monte Carlo audit of the standing moment and nondegeneracy assumptions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::sample::sample_pair_counted;
use super::spec::{Family, ModelSpec, QLaw};
use crate::error::{Error, Result};
use crate::geometry::{lyapunov, LyapunovEstimate};
use crate::linalg::{Mat, Vector};
use crate::rng::{tag, Streams};
use crate::stats::{mean_se, MeanEstimate};

pub const MIN_AUDIT_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    /// `est >= threshold`, decided only when the estimate is two standard
    /// errors clear of it. Exact estimates (zero error) may sit on the boundary.
    pub fn at_least(est: f64, se: f64, threshold: f64) -> Verdict {
        let slack = 1e-9 * threshold.abs().max(1.0);
        if !est.is_finite() {
            Verdict::Indeterminate
        } else if est - 2.0 * se >= threshold - slack {
            Verdict::Pass
        } else if est + 2.0 * se < threshold - slack {
            Verdict::Fail
        } else {
            Verdict::Indeterminate
        }
    }

    /// `est > threshold` with the same two-standard-error margin.
    pub fn greater(est: f64, se: f64, threshold: f64) -> Verdict {
        if !est.is_finite() {
            Verdict::Indeterminate
        } else if est - 2.0 * se > threshold {
            Verdict::Pass
        } else if est + 2.0 * se <= threshold {
            Verdict::Fail
        } else {
            Verdict::Indeterminate
        }
    }

    /// A finite expectation cannot be proven from samples; every supported
    /// family has all moments of the audited kind, so a finite estimate with a
    /// finite error passes.
    pub fn finite(est: f64, se: f64) -> Verdict {
        if est.is_finite() && se.is_finite() {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub assumption: &'static str,
    pub quantity: &'static str,
    pub requirement: &'static str,
    pub estimate: f64,
    pub std_error: f64,
    /// Exact value when the law is finitely supported.
    pub exact: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct NondegeneracyCheck {
    pub verdict: Verdict,
    pub detail: String,
    /// Least-squares residual of the stacked system `(I - M_i) v = q_i`.
    pub residual: Option<f64>,
    pub common_solution: Option<Vector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSign {
    Negative,
    NonNegative,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovHint {
    pub beta: f64,
    pub std_error: f64,
    pub sign: BetaSign,
}

/// The density lower bound `Prob(M ∈ ·) ≥ γ₀ 1_{B_c(Γ₀)} λ`, known in closed
/// form for Gaussian perturbations.
#[derive(Clone, Debug, Serialize)]
pub struct DensityBoundEcho {
    pub gamma0_matrix: Mat,
    pub c: f64,
    pub gamma0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub n_samples: usize,
    pub checks: Vec<AssumptionCheck>,
    pub nondegeneracy: NondegeneracyCheck,
    pub lyapunov_hint: LyapunovHint,
    pub density_bound: Option<DensityBoundEcho>,
    /// Fraction of `GaussianPerturbed` proposals rejected by the
    /// condition-number cap.
    pub rejection_rate: f64,
    pub overall: Verdict,
}

impl AssumptionReport {
    pub fn hard_failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .filter(|c| c.verdict == Verdict::Fail)
            .map(|c| format!("{}: {} ({})", c.assumption, c.quantity, c.requirement))
            .collect();
        if self.nondegeneracy.verdict == Verdict::Fail {
            out.push(format!("A6: {}", self.nondegeneracy.detail));
        }
        out
    }
}

fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Discrete support of `Q` as `(q, weight, tied M atom)` triples, or `None`
/// when `Q` has a density.
fn q_support(spec: &ModelSpec) -> Option<Vec<(Vector, f64, Option<usize>)>> {
    match &spec.q {
        QLaw::Constant { value } => Some(vec![(*value, 1.0, None)]),
        QLaw::Atoms { atoms, weights } => Some(
            atoms
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(a, w)| (*a, *w, None))
                .collect(),
        ),
        QLaw::Gaussian { mean, sd } => (*sd == 0.0).then(|| vec![(*mean, 1.0, None)]),
        QLaw::ByAtom { values } => {
            let weights = spec.m_atoms()?;
            Some(
                values
                    .iter()
                    .zip(weights)
                    .enumerate()
                    .filter(|(_, (_, (_, w)))| *w > 0.0)
                    .map(|(i, (v, (_, w)))| (*v, w, Some(i)))
                    .collect(),
            )
        }
    }
}

/// Does `M v + Q = v` have a solution `v` holding with probability one?
fn nondegeneracy(spec: &ModelSpec) -> NondegeneracyCheck {
    let d = spec.dimension;
    let Some(qs) = q_support(spec) else {
        return NondegeneracyCheck {
            verdict: Verdict::Pass,
            detail: "Q has a density, so no fixed vector holds almost surely".into(),
            residual: None,
            common_solution: None,
        };
    };
    if qs.iter().all(|(q, _, _)| q.norm() == 0.0) {
        return NondegeneracyCheck {
            verdict: Verdict::Fail,
            detail: "Q is identically zero, so v = 0 solves M v + Q = v".into(),
            residual: Some(0.0),
            common_solution: Some(Vector::zeros(d)),
        };
    }
    let Some(ms) = spec.m_atoms() else {
        return NondegeneracyCheck {
            verdict: Verdict::Indeterminate,
            detail: "M is continuous; holds generically but cannot be decided from samples".into(),
            residual: None,
            common_solution: None,
        };
    };
    // every pair (M, Q) that occurs with positive probability
    let mut pairs: Vec<(Mat, Vector)> = Vec::new();
    for (i, (m, wm)) in ms.iter().enumerate() {
        if *wm <= 0.0 {
            continue;
        }
        for (q, _, tied) in &qs {
            if tied.is_none_or(|t| t == i) {
                pairs.push((*m, *q));
            }
        }
    }
    let rows = pairs.len() * d;
    let mut a = DMatrix::<f64>::zeros(rows, d);
    let mut b = DVector::<f64>::zeros(rows);
    for (k, (m, q)) in pairs.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { 1.0 } else { 0.0 };
                a[(k * d + i, j)] = id - m.get(i, j);
            }
            b[k * d + i] = q.get(i);
        }
    }
    let scale = b.amax().max(1.0);
    let svd = a.clone().svd(true, true);
    let v = svd.solve(&b, 1e-12).expect("both factors were requested");
    let residual = (&a * &v - &b).amax();
    if residual <= 1e-9 * scale {
        let v = Vector::from_slice(v.as_slice());
        NondegeneracyCheck {
            verdict: Verdict::Fail,
            detail: format!("v = {:?} solves M v + Q = v on every atom", v.as_slice()),
            residual: Some(residual),
            common_solution: Some(v),
        }
    } else {
        NondegeneracyCheck {
            verdict: Verdict::Pass,
            detail: "no common solution of M v + Q = v across the atoms".into(),
            residual: Some(residual),
            common_solution: None,
        }
    }
}

struct Exact {
    log_m: Option<f64>,
    lam_min: Option<f64>,
    norm_moment: Option<f64>,
    log_q: Option<f64>,
    q_moment: Option<f64>,
}

fn exact_values(spec: &ModelSpec) -> Exact {
    let k0 = spec.kappa0;
    let m = spec.m_atoms().map(|atoms| {
        let mut s = (0.0, 0.0, 0.0);
        for (m, w) in atoms {
            let sv = m.singular_values();
            let (top, low) = (sv[0], *sv.last().unwrap());
            s.0 += w * log_plus(top);
            s.1 += w * low.powf(k0);
            s.2 += w * top.powf(k0) * log_plus(top);
        }
        s
    });
    let q = q_support(spec).map(|qs| {
        qs.iter().fold((0.0, 0.0), |acc, (q, w, _)| {
            let n = q.norm();
            (acc.0 + w * log_plus(n), acc.1 + w * n.powf(k0))
        })
    });
    Exact {
        log_m: m.map(|s| s.0),
        lam_min: m.map(|s| s.1),
        norm_moment: m.map(|s| s.2),
        log_q: q.map(|s| s.0),
        q_moment: q.map(|s| s.1),
    }
}

/// Estimates the moments entering the standing assumptions and decides each
/// with a three-valued verdict.
pub fn audit_assumptions(spec: &ModelSpec, n_samples: usize, streams: &Streams) -> Result<AssumptionReport> {
    spec.validate()?;
    if n_samples < MIN_AUDIT_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "audit needs at least {MIN_AUDIT_SAMPLES} samples, got {n_samples}"
        )));
    }
    let k0 = spec.kappa0;
    let mut rng = streams.rng(tag::AUDIT, 0);
    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut rejections = 0u64;
    for _ in 0..n_samples {
        let (pair, rej) = sample_pair_counted(spec, &mut rng)?;
        rejections += rej as u64;
        let sv = pair.m.singular_values();
        let (top, low) = (sv[0], *sv.last().unwrap());
        let qn = pair.q.norm();
        cols[0].push(log_plus(top));
        cols[1].push(log_plus(qn));
        // λ_min(M Mᵀ)^{κ₀/2} = σ_min^{κ₀} = inf_{|x|=1} |xM|^{κ₀}
        cols[2].push(low.powf(k0));
        cols[3].push(top.powf(k0) * log_plus(top));
        cols[4].push(qn.powf(k0));
    }
    let est: Vec<MeanEstimate> = cols.iter().map(|c| mean_se(c)).collect();
    let exact = exact_values(spec);

    let check = |assumption, quantity, requirement, e: &MeanEstimate, exact: Option<f64>, verdict| AssumptionCheck {
        assumption,
        quantity,
        requirement,
        estimate: e.mean,
        std_error: e.std_error,
        exact,
        verdict,
    };
    let checks = vec![
        check(
            "A1",
            "E log+ ||M||",
            "< infinity",
            &est[0],
            exact.log_m,
            Verdict::finite(est[0].mean, est[0].std_error),
        ),
        check(
            "A2",
            "E log+ |Q|",
            "< infinity",
            &est[1],
            exact.log_q,
            Verdict::finite(est[1].mean, est[1].std_error),
        ),
        check(
            "A7",
            "E inf_x |xM|^kappa0",
            ">= 1",
            &est[2],
            exact.lam_min,
            Verdict::at_least(est[2].mean, est[2].std_error, 1.0),
        ),
        check(
            "A7",
            "E ||M||^kappa0 log+ ||M||",
            "< infinity",
            &est[3],
            exact.norm_moment,
            Verdict::finite(est[3].mean, est[3].std_error),
        ),
        check(
            "A7",
            "E |Q|^kappa0",
            "> 0",
            &est[4],
            exact.q_moment,
            Verdict::greater(est[4].mean, est[4].std_error, 0.0),
        ),
        check(
            "A7",
            "E |Q|^kappa0",
            "< infinity",
            &est[4],
            exact.q_moment,
            Verdict::finite(est[4].mean, est[4].std_error),
        ),
    ];

    let nondegeneracy = nondegeneracy(spec);
    let LyapunovEstimate { beta, std_error, .. } = lyapunov(spec, 2000, 32, &streams.child(tag::AUDIT, 1))?;
    let sign = if beta + 2.0 * std_error < 0.0 {
        BetaSign::Negative
    } else if beta - 2.0 * std_error >= 0.0 {
        BetaSign::NonNegative
    } else {
        BetaSign::Indeterminate
    };
    let density_bound = match &spec.family {
        Family::GaussianPerturbed { gamma0, sigma, .. } => {
            // the entrywise Gaussian density is at least its value at
            // distance c = σ from the mean
            let d2 = (spec.dimension * spec.dimension) as f64;
            Some(DensityBoundEcho {
                gamma0_matrix: *gamma0,
                c: *sigma,
                gamma0: (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d2 / 2.0) * (-0.5f64).exp(),
            })
        }
        _ => None,
    };
    let mut overall = Verdict::Pass;
    for v in checks
        .iter()
        .map(|c| c.verdict)
        .chain(std::iter::once(nondegeneracy.verdict))
    {
        overall = match (overall, v) {
            (_, Verdict::Fail) | (Verdict::Fail, _) => Verdict::Fail,
            (_, Verdict::Indeterminate) | (Verdict::Indeterminate, _) => Verdict::Indeterminate,
            _ => Verdict::Pass,
        };
    }
    Ok(AssumptionReport {
        n_samples,
        checks,
        nondegeneracy,
        lyapunov_hint: LyapunovHint { beta, std_error, sign },
        density_bound,
        rejection_rate: rejections as f64 / (rejections as f64 + n_samples as f64),
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_margins() {
        assert_eq!(Verdict::at_least(1.0, 0.0, 1.0), Verdict::Pass);
        assert_eq!(Verdict::at_least(1.1, 0.01, 1.0), Verdict::Pass);
        assert_eq!(Verdict::at_least(1.01, 0.01, 1.0), Verdict::Indeterminate);
        assert_eq!(Verdict::at_least(0.9, 0.01, 1.0), Verdict::Fail);
        assert_eq!(Verdict::greater(0.0, 0.0, 0.0), Verdict::Fail);
        assert_eq!(Verdict::greater(1e-3, 1e-4, 0.0), Verdict::Pass);
    }
}
