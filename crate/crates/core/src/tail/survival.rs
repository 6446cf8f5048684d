use std::io::Write;

use serde::Serialize;

use super::sampling::RSampleSet;
use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::stats::{linear_fit, median, quantile_sorted, wilson, Z95};

/// Empirical quantiles bounding the calibrated range.
pub const CALIBRATED_LOWER: f64 = 0.99;
pub const CALIBRATED_UPPER: f64 = 0.9999;

/// `P̂(V > t)` with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct SurvivalPoint {
    pub t: f64,
    pub exceed: usize,
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Survival functions of `xR`, `-xR` and `|xR|` for one direction.
#[derive(Clone, Debug, Serialize)]
pub struct SurvivalCurve {
    pub x: SpherePoint,
    pub n: usize,
    pub positive: Vec<SurvivalPoint>,
    pub negative: Vec<SurvivalPoint>,
    pub modulus: Vec<SurvivalPoint>,
}

/// Survival function of `values` on `t_grid`.
pub fn survival(values: &[f64], t_grid: &[f64]) -> Vec<SurvivalPoint> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    survival_sorted(&v, t_grid)
}

pub fn survival_sorted(sorted: &[f64], t_grid: &[f64]) -> Vec<SurvivalPoint> {
    let n = sorted.len();
    t_grid
        .iter()
        .map(|&t| {
            let exceed = n - sorted.partition_point(|v| *v <= t);
            let (lower, upper) = wilson(exceed, n, Z95);
            SurvivalPoint {
                t,
                exceed,
                p: if n == 0 { f64::NAN } else { exceed as f64 / n as f64 },
                lower,
                upper,
            }
        })
        .collect()
}

/// Curves for each direction on a shared `t_grid`.
pub fn survival_curves(samples: &RSampleSet, directions: &[SpherePoint], t_grid: &[f64]) -> Result<Vec<SurvivalCurve>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no R samples".into()));
    }
    Ok(directions
        .iter()
        .map(|x| {
            let proj = samples.project(x.coords());
            let neg: Vec<f64> = proj.iter().map(|v| -v).collect();
            let abs: Vec<f64> = proj.iter().map(|v| v.abs()).collect();
            SurvivalCurve {
                x: *x,
                n: proj.len(),
                positive: survival(&proj, t_grid),
                negative: survival(&neg, t_grid),
                modulus: survival(&abs, t_grid),
            }
        })
        .collect())
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "log grid needs 0 < lo < hi and n >= 2, got [{lo}, {hi}] with {n}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// `[q(0.99), q(0.9999)]` of `values`.
pub fn calibrated_range(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 10_000 {
        return Err(Error::InsufficientSamples(format!(
            "calibrated range needs at least 10^4 values, got {}",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&v, CALIBRATED_LOWER);
    let hi = quantile_sorted(&v, CALIBRATED_UPPER);
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InsufficientSamples(format!(
            "degenerate calibrated range [{lo}, {hi}]"
        )));
    }
    Ok((lo, hi))
}

/// `t^κ P̂(t)` along a curve.
pub fn scaled_tail(points: &[SurvivalPoint], kappa: f64) -> Vec<f64> {
    points.iter().map(|p| p.t.powf(kappa) * p.p).collect()
}

/// `max |s / median(s) - 1|`.
pub fn flatness(scaled: &[f64]) -> f64 {
    let m = median(scaled);
    scaled.iter().map(|s| (s / m - 1.0).abs()).fold(0.0, f64::max)
}

/// `-slope` of `log P̂` against `log t`, over points with positive mass.
pub fn loglog_slope(points: &[SurvivalPoint]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.p > 0.0)
        .map(|p| (p.t.ln(), p.p.ln()))
        .unzip();
    if x.len() < 2 {
        return f64::NAN;
    }
    -linear_fit(&x, &y).0
}

/// CSV of one curve set: direction index, coordinates, `t`, and the three
/// survival functions with Wilson bounds.
pub fn write_curves_csv<W: Write>(curves: &[SurvivalCurve], mut w: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let d = curves.first().map_or(1, |c| c.x.dim());
    let mut header = String::from("direction");
    for i in 1..=d {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(
        w,
        "{header},t,p_pos,lo_pos,hi_pos,p_neg,lo_neg,hi_neg,p_abs,lo_abs,hi_abs"
    )?;
    for (k, c) in curves.iter().enumerate() {
        let coords: String = c.x.coords().as_slice().iter().map(|v| format!(",{v:.16e}")).collect();
        for ((p, n), a) in c.positive.iter().zip(&c.negative).zip(&c.modulus) {
            writeln!(
                w,
                "{k}{coords},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.t, p.p, p.lower, p.upper, n.p, n.lower, n.upper, a.p, a.lower, a.upper
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let s = survival(&[2.0, 3.0, 5.0], &[1.0, 3.0, 6.0]);
        assert_eq!(s[0].p, 1.0);
        assert!((s[1].p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[2].p, 0.0);
        let point = survival(&[2.0; 10], &[3.0]);
        assert_eq!(point[0].p, 0.0);
    }

    #[test]
    fn pareto_slope() {
        // exact quantiles of Pareto(2)
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-0.5)).collect();
        let t = log_grid(2.0, 20.0, 10).unwrap();
        let s = survival(&v, &t);
        assert!((loglog_slope(&s) - 2.0).abs() < 0.02);
        assert!(flatness(&scaled_tail(&s, 2.0)) < 0.05);
    }
}
