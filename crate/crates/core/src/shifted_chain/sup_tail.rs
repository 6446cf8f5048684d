use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ProductAccumulator, SpherePoint};
use crate::model::{ModelSpec, PairLaw};
use crate::rng::{tag, Streams};
use crate::stats::{wilson, Z95};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupTailConfig {
    /// A path stops once `log |xΠ_n|` is `zeta` below its running max...
    pub zeta: f64,
    /// ...and no new record has been set for `window` steps.
    pub window: usize,
    /// Paths still running after this many steps are censored.
    pub max_steps: usize,
}

impl Default for SupTailConfig {
    fn default() -> Self {
        SupTailConfig {
            zeta: 20.0,
            window: 100,
            max_steps: 1_000_000,
        }
    }
}

/// `P̂(sup_{n≥1} |xΠ_n| > t)` on a grid of `t`.
#[derive(Clone, Debug, Serialize)]
pub struct SupTailEstimate {
    pub x: SpherePoint,
    pub kappa: f64,
    pub t: Vec<f64>,
    pub survival: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `t^κ P̂(sup > t)`
    pub scaled: Vec<f64>,
    pub n_paths: usize,
    pub censored: usize,
    pub censoring_rate: f64,
    pub mean_steps: f64,
}

impl SupTailEstimate {
    /// `max |s / median(s) - 1|` of the scaled survival.
    pub fn flatness(&self) -> f64 {
        let m = crate::stats::median(&self.scaled);
        self.scaled.iter().map(|s| (s / m - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Simulates `sup_{n≥1} |xΠ_n|` under the original law; path `i` uses
/// stream `i` of `streams`.
pub fn sup_tail(
    spec: &ModelSpec,
    kappa: f64,
    x: &SpherePoint,
    t_grid: &[f64],
    n_paths: usize,
    cfg: &SupTailConfig,
    streams: &Streams,
) -> Result<SupTailEstimate> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("t grid must be positive and increasing".into()));
    }
    if n_paths == 0 || cfg.window == 0 || cfg.zeta <= 0.0 {
        return Err(Error::InvalidArgument(
            "n_paths, window and zeta must be positive".into(),
        ));
    }
    if x.dim() != spec.dimension {
        return Err(Error::InvalidArgument("direction has the wrong dimension".into()));
    }
    let paths: Vec<(f64, bool, usize)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(tag::SUP_TAIL, i as u64);
            let mut acc = ProductAccumulator::new(*x);
            let mut best = f64::NEG_INFINITY;
            let mut since = 0usize;
            for n in 1..=cfg.max_steps {
                let m = spec.draw(&mut rng)?.m;
                acc.step(&m)?;
                let v = acc.log_norm;
                if v > best {
                    best = v;
                    since = 0;
                } else {
                    since += 1;
                }
                if v < best - cfg.zeta && since >= cfg.window {
                    return Ok((best, false, n));
                }
            }
            Ok((best, true, cfg.max_steps))
        })
        .collect::<Result<_>>()?;
    let censored = paths.iter().filter(|p| p.1).count();
    let mean_steps = paths.iter().map(|p| p.2 as f64).sum::<f64>() / n_paths as f64;
    let mut maxima: Vec<f64> = paths.iter().map(|p| p.0).collect();
    maxima.sort_by(f64::total_cmp);
    let mut survival = Vec::with_capacity(t_grid.len());
    let mut lower = Vec::with_capacity(t_grid.len());
    let mut upper = Vec::with_capacity(t_grid.len());
    let mut scaled = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let lt = t.ln();
        let above = n_paths - maxima.partition_point(|m| *m <= lt);
        let p = above as f64 / n_paths as f64;
        let (lo, hi) = wilson(above, n_paths, Z95);
        survival.push(p);
        lower.push(lo);
        upper.push(hi);
        scaled.push(t.powf(kappa) * p);
    }
    Ok(SupTailEstimate {
        x: *x,
        kappa,
        t: t_grid.to_vec(),
        survival,
        lower,
        upper,
        scaled,
        n_paths,
        censored,
        censoring_rate: censored as f64 / n_paths as f64,
        mean_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::model::{presets, Family, QLaw};

    #[test]
    fn deterministic_contraction() {
        let spec = ModelSpec {
            dimension: 1,
            kappa0: 1.0,
            family: Family::ScalarTwoPoint {
                atoms: vec![0.5],
                weights: vec![1.0],
            },
            q: QLaw::Constant {
                value: Vector::from_slice(&[1.0]),
            },
        };
        let est = sup_tail(
            &spec,
            1.0,
            &SpherePoint::basis(1, 0),
            &[0.4, 0.5, 0.6],
            50,
            &SupTailConfig::default(),
            &Streams::new(1),
        )
        .unwrap();
        assert_eq!(est.survival, vec![1.0, 0.0, 0.0]);
        assert_eq!(est.censored, 0);
    }

    #[test]
    fn two_point_lattice_levels() {
        // P(sup ≥ 2^k) = (3/7)^k
        let est = sup_tail(
            &presets::two_point(),
            (7.0f64 / 3.0).log2(),
            &SpherePoint::basis(1, 0),
            &[1.5, 3.0],
            20_000,
            &SupTailConfig::default(),
            &Streams::new(2),
        )
        .unwrap();
        for (p, k) in est.survival.iter().zip([1, 2]) {
            let exact = (3.0f64 / 7.0).powi(k);
            let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
            assert!((p - exact).abs() < 4.0 * se, "{p} vs {exact}");
        }
    }
}
