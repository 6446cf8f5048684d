use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use super::{OperatorConfig, TransferOperator};
use crate::error::{Error, Result};
use crate::geometry::{GridFunction, SphereGrid};
use crate::model::ModelSpec;
use crate::rng::{tag, Streams};

/// Tail index, `ρ̂` curve and eigenfunction.
#[derive(Clone, Debug)]
pub struct KappaSolution {
    pub kappa: f64,
    pub rho_at_kappa: f64,
    /// `(ϰ, ρ̂(ϰ))` sorted by `ϰ`, including `(0, 1)`.
    pub rho_curve: Vec<(f64, f64)>,
    /// Eigenfunction at `κ`, normalized to `max r = 1`, exactly symmetric.
    pub r: GridFunction,
    /// Total power-iteration sweeps over the whole solve.
    pub iterations: usize,
    /// Standard error of `κ` from independent sample sets (0 for closed forms).
    pub mc_error: f64,
    /// Standard deviation of `log ρ̂(κ)` across the independent sets.
    pub log_rho_sd: f64,
    /// `d log ρ̂ / dϰ` at `κ`.
    pub slope: f64,
    pub closed_form: bool,
    pub n_mc: usize,
}

/// The JSON summary of a [`KappaSolution`].
#[derive(Clone, Debug, Serialize)]
pub struct KappaSummary {
    pub kappa: f64,
    pub rho_at_kappa: f64,
    pub iterations: usize,
    pub mc_error: f64,
    pub grid_resolution: usize,
    pub grid_points: usize,
    pub log_rho_sd: f64,
    pub slope: f64,
    pub method: &'static str,
    pub n_mc: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl KappaSolution {
    pub fn summary(&self) -> KappaSummary {
        KappaSummary {
            kappa: self.kappa,
            rho_at_kappa: self.rho_at_kappa,
            iterations: self.iterations,
            mc_error: self.mc_error,
            grid_resolution: self.r.grid().resolution(),
            grid_points: self.r.grid().len(),
            log_rho_sd: self.log_rho_sd,
            slope: self.slope,
            method: if self.closed_form { "closed_form" } else { "monte_carlo" },
            n_mc: self.n_mc,
            r_min: self.r.min(),
            r_max: self.r.max(),
        }
    }

    pub fn write_rho_curve_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "varkappa,rho")?;
        for (k, r) in &self.rho_curve {
            writeln!(w, "{k:.16e},{r:.16e}")?;
        }
        Ok(())
    }
}

/// `sup |T_κ r - r| / sup r`.
pub fn fixed_point_residual(op: &TransferOperator, kappa: f64, r: &GridFunction) -> f64 {
    let tr = op.apply(r, kappa);
    let diff = tr
        .values()
        .iter()
        .zip(r.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    diff / r.max()
}

struct Evaluator<'a> {
    op: &'a TransferOperator,
    cfg: &'a OperatorConfig,
    curve: Vec<(f64, f64)>,
    sweeps: usize,
    warm: Option<GridFunction>,
}

impl Evaluator<'_> {
    fn log_rho(&mut self, varkappa: f64) -> Result<(f64, GridFunction)> {
        let (rho, r, sweeps) = self.op.spectral_radius(varkappa, self.cfg, self.warm.as_ref())?;
        self.sweeps += sweeps;
        self.curve.push((varkappa, rho));
        self.warm = Some(r.clone());
        Ok((rho.ln(), r))
    }
}

/// Spread of `log ρ̂(ϰ)` over `cfg.error_sets` independent sample sets.
fn log_rho_spread(
    spec: &ModelSpec,
    grid: &Arc<SphereGrid>,
    varkappa: f64,
    cfg: &OperatorConfig,
    streams: &Streams,
    warm: &GridFunction,
) -> Result<f64> {
    if cfg.error_sets < 2 {
        return Ok(f64::NAN);
    }
    // sequential: each operator is already built and applied in parallel, and
    // holding all sets at once costs too much memory on fine grids
    let logs: Vec<f64> = (1..=cfg.error_sets as u64)
        .map(|s| {
            let op = TransferOperator::build(spec, grid.clone(), cfg, streams, tag::OPERATOR_ERROR, s)?;
            op.spectral_radius(varkappa, cfg, Some(warm))
                .map(|(rho, _, _)| rho.ln())
        })
        .collect::<Result<_>>()?;
    Ok(crate::stats::mean_se(&logs).std_error * (logs.len() as f64).sqrt())
}

/// Solves `ρ̂(κ) = 1` on `(0, κ₀]` by bisection on `log ρ̂` with the sample
/// set frozen across all `ϰ`.
pub fn solve_kappa(
    spec: &ModelSpec,
    grid: Arc<SphereGrid>,
    cfg: &OperatorConfig,
    streams: &Streams,
) -> Result<KappaSolution> {
    cfg.validate()?;
    let op = TransferOperator::build(spec, grid.clone(), cfg, streams, tag::OPERATOR, 0)?;
    let k0 = spec.kappa0;
    let mut ev = Evaluator {
        op: &op,
        cfg,
        curve: vec![(0.0, 1.0)],
        sweeps: 0,
        warm: None,
    };
    let p = cfg.curve_points;
    let mut grid_logs = Vec::with_capacity(p);
    let mut fns = Vec::with_capacity(p);
    for k in 1..=p {
        let x = k0 * k as f64 / p as f64;
        let (l, r) = ev.log_rho(x)?;
        grid_logs.push((x, l));
        fns.push(r);
    }
    let bracket_error = |reason: String, ev: &Evaluator, at: f64| -> Result<KappaSolution> {
        let mc_error = if op.is_closed_form() {
            0.0
        } else {
            log_rho_spread(spec, &grid, at, cfg, streams, ev.warm.as_ref().unwrap())?
        };
        let mut curve = ev.curve.clone();
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        Err(Error::Bracketing {
            reason,
            curve,
            mc_error,
        })
    };

    let (_, log_k0) = grid_logs[p - 1];
    let (kappa, r, log_rho) = if log_k0.abs() <= cfg.root_tol {
        (k0, fns[p - 1].clone(), log_k0)
    } else {
        if log_k0 < 0.0 {
            let spread = if op.is_closed_form() {
                0.0
            } else {
                log_rho_spread(spec, &grid, k0, cfg, streams, &fns[p - 1])?
            };
            let reason = if spread.is_finite() && log_k0.abs() < 3.0 * spread {
                format!("log rho(kappa0) = {log_k0:.3e} is within Monte Carlo noise ({spread:.3e}); increase n_mc")
            } else {
                format!(
                    "rho(kappa0) = {:.6} < 1: kappa0 = {k0} is below the tail index",
                    log_k0.exp()
                )
            };
            return bracket_error(reason, &ev, k0);
        }
        let Some(first_neg) = grid_logs.iter().position(|(_, l)| *l < 0.0) else {
            return bracket_error(
                format!(
                    "rho >= 1 at every evaluated point of (0, {k0}]; the Lyapunov exponent is probably not negative"
                ),
                &ev,
                grid_logs[0].0,
            );
        };
        let first_pos = first_neg + grid_logs[first_neg..].iter().position(|(_, l)| *l >= 0.0).unwrap();
        let mut lo = grid_logs[first_pos - 1].0;
        let mut hi = grid_logs[first_pos].0;
        ev.warm = Some(fns[first_pos - 1].clone());
        let mut best = (lo, fns[first_pos - 1].clone(), grid_logs[first_pos - 1].1);
        loop {
            let mid = 0.5 * (lo + hi);
            let (l, r) = ev.log_rho(mid)?;
            if l.abs() < best.2.abs() {
                best = (mid, r.clone(), l);
            }
            if l.abs() <= cfg.root_tol || hi - lo <= 1e-13 * k0 {
                break (mid, r, l);
            }
            if l < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    };

    // slope of log ρ̂ at κ by a central difference
    let h = 1e-4 * k0;
    let mut side = |x: f64| -> Result<f64> {
        let (rho, _, sweeps) = op.spectral_radius(x, cfg, Some(&r))?;
        ev.sweeps += sweeps;
        Ok(rho.ln())
    };
    let slope = (side(kappa + h)? - side((kappa - h).max(0.0))?) / (kappa + h - (kappa - h).max(0.0));
    let (mc_error, log_rho_sd) = if op.is_closed_form() {
        (0.0, 0.0)
    } else {
        let sd = log_rho_spread(spec, &grid, kappa, cfg, streams, &r)?;
        (sd / slope.abs(), sd)
    };
    let mut curve = ev.curve;
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(KappaSolution {
        kappa,
        rho_at_kappa: log_rho.exp(),
        rho_curve: curve,
        r,
        iterations: ev.sweeps,
        mc_error,
        log_rho_sd,
        slope,
        closed_form: op.is_closed_form(),
        n_mc: op.n_samples(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn two_point_root() {
        let grid = Arc::new(SphereGrid::new(1, 0).unwrap());
        let sol = solve_kappa(
            &presets::two_point(),
            grid,
            &OperatorConfig::default(),
            &Streams::new(1),
        )
        .unwrap();
        assert!((sol.kappa - (7.0f64 / 3.0).log2()).abs() < 1e-8, "{}", sol.kappa);
        assert!((sol.rho_at_kappa - 1.0).abs() <= 1e-9);
        assert_eq!(sol.mc_error, 0.0);
        assert!((sol.slope - 0.4 * 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn kappa0_below_root_is_a_bracketing_error() {
        let mut spec = presets::two_point();
        spec.kappa0 = 1.0;
        let grid = Arc::new(SphereGrid::new(1, 0).unwrap());
        match solve_kappa(&spec, grid, &OperatorConfig::default(), &Streams::new(1)) {
            Err(Error::Bracketing { curve, .. }) => assert!(curve.len() >= 8),
            other => panic!("expected bracketing error, got {other:?}"),
        }
    }
}
