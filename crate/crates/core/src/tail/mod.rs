//! Samples of the stationary solution `R`, survival curves of `xR`, Hill
//! estimates, the constant `K₀` and the assembled tail `K(x) = K₀ r(x)`.

mod goldie;
mod hill;
mod sampling;
mod support;
mod survival;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridFunction, SpherePoint};
use crate::model::PairLaw;
use crate::operator::KappaSolution;
use crate::rng::{tag, Streams};
use crate::shifted_chain::StationaryEstimate;
use crate::stats::median;

pub use goldie::{goldie_constant, goldie_constant_with, GoldieEstimate};
pub use hill::{default_fractions, hill_estimate, write_hill_csv, HillPoint, HILL_FRACTION};
pub use sampling::{
    resample_at_depth, sample_r, sample_r_fixed_depth, FlaggedSample, RSampleSet, TruncationConfig, TRUNCATION_SAFETY,
};
pub use support::{support_unbounded_check, SupportCheck, SupportDirection, MIN_GROWTH};
pub use survival::{
    calibrated_range, flatness, log_grid, loglog_slope, scaled_tail, survival, survival_curves, survival_sorted,
    write_curves_csv, SurvivalCurve, SurvivalPoint, CALIBRATED_LOWER, CALIBRATED_UPPER,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub n_samples: usize,
    pub truncation: TruncationConfig,
    /// `(M, Q, R)` triples for `K₀`.
    pub n_pairs: usize,
    /// Points of the log-spaced `t` grid per direction.
    pub t_points: usize,
    /// Override the calibrated range.
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// Random grid directions added to the signed coordinate directions.
    pub random_directions: usize,
    pub flatness_tol: f64,
    pub level_tol: f64,
    pub triangle_tol: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            n_samples: 1_000_000,
            truncation: TruncationConfig::default(),
            n_pairs: 200_000,
            t_points: 20,
            t_min: None,
            t_max: None,
            random_directions: 8,
            flatness_tol: 0.25,
            level_tol: 0.25,
            triangle_tol: 0.1,
        }
    }
}

impl TailConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_samples < 10_000 {
            return bad("tail.n_samples must be at least 10^4");
        }
        if self.t_points < 2 {
            return bad("tail.t_points must be at least 2");
        }
        if self.n_pairs < 2 || self.n_pairs > self.n_samples {
            return bad("tail.n_pairs must be in 2..=n_samples");
        }
        if let (Some(a), Some(b)) = (self.t_min, self.t_max) {
            if !(a > 0.0 && b > a) {
                return bad("tail.t_min and tail.t_max must satisfy 0 < t_min < t_max");
            }
        }
        Ok(())
    }
}

/// The `2d` signed coordinate directions plus `n_random` distinct points of
/// the eigenfunction grid chosen by the seed.
pub fn default_directions(r: &GridFunction, n_random: usize, streams: &Streams) -> Vec<SpherePoint> {
    let grid = r.grid();
    let d = grid.dim();
    let mut out: Vec<SpherePoint> = Vec::new();
    for i in 0..d {
        out.push(SpherePoint::basis(d, i));
        out.push(SpherePoint::basis(d, i).neg());
    }
    let mut rng = streams.rng(tag::DIRECTIONS, 0);
    let picks = sample(&mut rng, grid.len(), n_random.min(grid.len())).into_vec();
    for k in picks {
        let p = *grid.point(k);
        if !out.iter().any(|q| q.distance(&p) < 1e-12) {
            out.push(p);
        }
    }
    out
}

/// Per-direction tail readout.
#[derive(Clone, Debug, Serialize)]
pub struct DirectionReport {
    pub x: SpherePoint,
    pub t_range: (f64, f64),
    pub r_x: f64,
    /// `K̂(x) = K̂₀ r(x)`
    pub k_x: f64,
    pub k_x_se: f64,
    /// Median over the range of `t^κ P̂(|xR| > t) / 2`.
    pub empirical_level: f64,
    /// `|K̂(x) / level - 1|`
    pub level_deviation: f64,
    pub flatness: f64,
    pub slope_kappa: f64,
    /// Hill estimate on `(xR)⁺` at the pre-registered fraction, if defined.
    pub hill_kappa: Option<f64>,
    /// Wilson lower bound of `P̂(|xR| > t)` at the top of the range.
    pub top_lower_bound: f64,
    /// Fraction of `t` in the range where `P̂(xR > t)` and `P̂(-xR > t)` have
    /// overlapping Wilson intervals. The points are strongly correlated, so
    /// a single miss is not evidence of asymmetry.
    pub symmetry_overlap: f64,
    pub level_ok: bool,
    pub flat_ok: bool,
    pub positive_ok: bool,
}

/// Operator `κ`, Hill `κ̂` and survival slope on pooled `|R|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConsistencyTriangle {
    pub operator_kappa: f64,
    pub hill_kappa: f64,
    pub hill_se: f64,
    pub slope_kappa: f64,
    pub t_range: (f64, f64),
    pub max_pairwise: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationSummary {
    pub n_requested: usize,
    pub n_accepted: usize,
    pub n_flagged: usize,
    pub mean_depth: f64,
    pub max_depth: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub kappa: f64,
    pub k0: GoldieEstimate,
    pub directions: Vec<DirectionReport>,
    pub triangle: ConsistencyTriangle,
    pub pooled_hill: Vec<HillPoint>,
    pub support: SupportCheck,
    pub truncation: TruncationSummary,
    #[serde(skip)]
    pub curves: Vec<SurvivalCurve>,
    #[serde(skip)]
    pub hill_traces: Vec<(String, Vec<HillPoint>)>,
}

impl TailReport {
    pub fn pass(&self) -> bool {
        self.triangle.pass
            && self.k0.k0 > 0.0
            && self.directions.iter().all(|d| d.level_ok && d.flat_ok && d.positive_ok)
    }
}

fn overlap(a: &SurvivalPoint, b: &SurvivalPoint) -> bool {
    a.lower <= b.upper && b.lower <= a.upper
}

/// Assembles the full tail readout from existing samples.
#[allow(clippy::too_many_arguments)]
pub fn tail_report<L: PairLaw>(
    law: &L,
    solution: &KappaSolution,
    pi: &StationaryEstimate,
    samples: &RSampleSet,
    directions: &[SpherePoint],
    cfg: &TailConfig,
    n_requested: usize,
    streams: &Streams,
) -> Result<TailReport> {
    cfg.validate()?;
    let kappa = solution.kappa;
    let k0 = goldie_constant(
        samples,
        law,
        kappa,
        &solution.r,
        pi,
        (pi.alpha, pi.alpha_se),
        cfg.n_pairs.min(samples.len()),
        streams,
    )?;
    let fractions = default_fractions();

    let range = |values: &[f64]| -> Result<(f64, f64)> {
        match (cfg.t_min, cfg.t_max) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => {
                let (a, b) = calibrated_range(values)?;
                Ok((cfg.t_min.unwrap_or(a), cfg.t_max.unwrap_or(b)))
            }
        }
    };

    let mut reports = Vec::with_capacity(directions.len());
    let mut curves = Vec::with_capacity(directions.len());
    let mut hill_traces = Vec::new();
    for (i, x) in directions.iter().enumerate() {
        let proj = samples.project(x.coords());
        let abs: Vec<f64> = proj.iter().map(|v| v.abs()).collect();
        let t_range = range(&abs)?;
        let t = log_grid(t_range.0, t_range.1, cfg.t_points)?;
        let curve = survival_curves(samples, std::slice::from_ref(x), &t)?.remove(0);
        let scaled: Vec<f64> = scaled_tail(&curve.modulus, kappa).iter().map(|s| s / 2.0).collect();
        let level = median(&scaled);
        let r_x = solution.r.interpolate(x);
        let k_x = k0.k0 * r_x;
        let flat = flatness(&scaled);
        let hill = hill_estimate(&proj, &fractions).ok();
        let hill_kappa = hill
            .as_ref()
            .and_then(|h| h.iter().find(|p| (p.fraction - HILL_FRACTION).abs() < 1e-12))
            .map(|p| p.kappa);
        if let Some(h) = hill {
            hill_traces.push((format!("direction_{i}"), h));
        }
        let top_lower_bound = curve.modulus.last().map_or(0.0, |p| p.lower);
        let symmetry_overlap = curve
            .positive
            .iter()
            .zip(&curve.negative)
            .filter(|(a, b)| overlap(a, b))
            .count() as f64
            / curve.positive.len().max(1) as f64;
        let level_deviation = (k_x / level - 1.0).abs();
        reports.push(DirectionReport {
            x: *x,
            t_range,
            r_x,
            k_x,
            k_x_se: k0.std_error * r_x,
            empirical_level: level,
            level_deviation,
            flatness: flat,
            slope_kappa: loglog_slope(&curve.modulus),
            hill_kappa,
            top_lower_bound,
            symmetry_overlap,
            level_ok: level_deviation <= cfg.level_tol,
            flat_ok: flat <= cfg.flatness_tol,
            positive_ok: k_x > 0.0 && top_lower_bound > 0.0,
        });
        curves.push(curve);
    }

    let norms = samples.norms();
    let pooled_range = range(&norms)?;
    let pooled_t = log_grid(pooled_range.0, pooled_range.1, cfg.t_points)?;
    let pooled_curve = survival(&norms, &pooled_t);
    let pooled_hill = hill_estimate(&norms, &fractions)?;
    let at = pooled_hill
        .iter()
        .find(|p| (p.fraction - HILL_FRACTION).abs() < 1e-12)
        .copied()
        .expect("default fractions include the pre-registered one");
    hill_traces.push(("modulus".into(), pooled_hill.clone()));
    let slope = loglog_slope(&pooled_curve);
    let trio = [kappa, at.kappa, slope];
    let max_pairwise = (0..3)
        .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
        .map(|(i, j)| (trio[i] - trio[j]).abs())
        .fold(0.0, f64::max);
    let triangle = ConsistencyTriangle {
        operator_kappa: kappa,
        hill_kappa: at.kappa,
        hill_se: at.std_error,
        slope_kappa: slope,
        t_range: pooled_range,
        max_pairwise,
        pass: max_pairwise <= cfg.triangle_tol,
    };

    let support = support_unbounded_check(samples, directions)?;
    Ok(TailReport {
        kappa,
        k0,
        directions: reports,
        triangle,
        pooled_hill,
        support,
        truncation: TruncationSummary {
            n_requested,
            n_accepted: samples.len(),
            n_flagged: samples.flagged.len(),
            mean_depth: samples.mean_depth(),
            max_depth: samples.depth.iter().copied().max().unwrap_or(0),
            tol: samples.tol,
        },
        curves,
        hill_traces,
    })
}
