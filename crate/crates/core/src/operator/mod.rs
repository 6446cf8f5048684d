//! The transfer operator `T_ϰ f(x) = E |xM|^ϰ f((xM)^~)` on a sphere grid,
//! its spectral radius `ρ(ϰ)`, and the tail index `κ` solving `ρ(κ) = 1`.

mod kappa;
mod products;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, GridFunction, SphereGrid, Stencil};
use crate::linalg::Mat;
use crate::model::spec::{RotationLaw, ScaleLaw};
use crate::model::{ModelSpec, PairLaw};
use crate::rng::{tag, Streams};

pub use kappa::{fixed_point_residual, solve_kappa, KappaSolution, KappaSummary};
pub use products::validate_rho_by_products;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMethod {
    /// Closed form when the family has one, Monte Carlo otherwise.
    #[default]
    Auto,
    MonteCarlo,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    /// Monte Carlo samples of `M` per application.
    pub n_mc: usize,
    /// Reuse one sample set across grid points, sweeps and `ϰ` values.
    pub common_random_numbers: bool,
    /// Relative sup-norm change that ends power iteration.
    pub power_iter_tol: f64,
    pub power_iter_max: usize,
    /// Tolerance on `|log ρ̂(κ)|`.
    pub root_tol: f64,
    pub method: OperatorMethod,
    /// Independent sample sets used to estimate the Monte Carlo error.
    pub error_sets: usize,
    /// Equally spaced evaluations of `ρ̂` on `(0, κ₀]` before bisection.
    pub curve_points: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            n_mc: 4000,
            common_random_numbers: true,
            power_iter_tol: 1e-9,
            power_iter_max: 5000,
            root_tol: 1e-9,
            method: OperatorMethod::Auto,
            error_sets: 10,
            curve_points: 12,
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_mc < 1000 {
            return bad("operator.n_mc must be at least 1000");
        }
        if !(self.power_iter_tol > 0.0 && self.root_tol > 0.0) {
            return bad("operator tolerances must be positive");
        }
        if self.power_iter_max == 0 {
            return bad("operator.power_iter_max must be positive");
        }
        if self.curve_points < 8 {
            return bad("operator.curve_points must be at least 8");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    /// `T f(x_j) = m(ϰ) Σ_i w_i |x_j M_i|^ϰ f̂((x_j M_i)^~) / Σ_i w_i`, where
    /// `m(ϰ)` is the moment of an independent scalar factor, if any.
    Samples {
        n: usize,
        weights: Vec<f64>,
        /// `log |x_j M_i|` at `j * n + i`
        log_norm: Vec<f64>,
        stencil: Vec<Stencil>,
        scale: Option<ScaleLaw>,
    },
    /// Haar-random similarity: `T f(x) = E A^ϰ · ∫ f dλ_S`.
    Uniform { scale: ScaleLaw },
}

/// `T_ϰ` discretized on a grid with a frozen set of matrices.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    grid: Arc<SphereGrid>,
    kernel: Kernel,
    closed_form: bool,
}

impl TransferOperator {
    /// Exact operator for tabulated and similarity families.
    pub fn closed_form(spec: &ModelSpec, grid: Arc<SphereGrid>) -> Result<Self> {
        spec.validate()?;
        check_grid(spec, &grid)?;
        if let Some(atoms) = spec.m_atoms() {
            let (ms, ws): (Vec<Mat>, Vec<f64>) = atoms.into_iter().unzip();
            return Self::from_matrices(grid, &ms, ws, None, true);
        }
        match spec.similarity_parts() {
            Some((scale, RotationLaw::Haar)) => Ok(TransferOperator {
                grid,
                kernel: Kernel::Uniform { scale },
                closed_form: true,
            }),
            Some((scale, rotation)) => {
                let o = match rotation {
                    RotationLaw::Identity => Mat::identity(spec.dimension),
                    RotationLaw::Angle { radians } => Mat::rotation2(radians),
                    RotationLaw::Fixed { matrix } => matrix,
                    RotationLaw::Haar => unreachable!(),
                };
                Self::from_matrices(grid, &[o], vec![1.0], Some(scale), true)
            }
            None => Err(Error::Unsupported(
                "no closed-form operator for this family; use Monte Carlo".into(),
            )),
        }
    }

    /// Monte Carlo operator with `n_mc` matrices drawn from `rng`.
    pub fn monte_carlo<L: PairLaw, R: Rng + ?Sized>(
        law: &L,
        grid: Arc<SphereGrid>,
        n_mc: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let ms: Vec<Mat> = (0..n_mc).map(|_| law.draw(rng).map(|p| p.m)).collect::<Result<_>>()?;
        Self::from_matrices(grid, &ms, vec![1.0; n_mc], None, false)
    }

    /// The operator selected by `cfg.method`, with sample set `set` of the
    /// given stream family (set 0 of [`tag::OPERATOR`] is the primary one).
    pub fn build(
        spec: &ModelSpec,
        grid: Arc<SphereGrid>,
        cfg: &OperatorConfig,
        streams: &Streams,
        purpose: u64,
        set: u64,
    ) -> Result<Self> {
        let closed_available = spec.m_atoms().is_some() || spec.similarity_parts().is_some();
        match cfg.method {
            OperatorMethod::ClosedForm => Self::closed_form(spec, grid),
            OperatorMethod::Auto if closed_available => Self::closed_form(spec, grid),
            _ => {
                spec.validate()?;
                check_grid(spec, &grid)?;
                Self::monte_carlo(spec, grid, cfg.n_mc, &mut streams.rng(purpose, set))
            }
        }
    }

    fn from_matrices(
        grid: Arc<SphereGrid>,
        ms: &[Mat],
        weights: Vec<f64>,
        scale: Option<ScaleLaw>,
        closed_form: bool,
    ) -> Result<Self> {
        let n = ms.len();
        let rows: Vec<(Vec<f64>, Vec<Stencil>)> = grid
            .points()
            .par_iter()
            .map(|x| {
                let mut logs = Vec::with_capacity(n);
                let mut st = Vec::with_capacity(n);
                for m in ms {
                    let y = m.row_action(x.coords());
                    let norm = y.norm();
                    logs.push(norm.ln());
                    st.push(grid.stencil(&project(&y)?));
                }
                Ok((logs, st))
            })
            .collect::<Result<_>>()?;
        let mut log_norm = Vec::with_capacity(n * grid.len());
        let mut stencil = Vec::with_capacity(n * grid.len());
        for (l, s) in rows {
            log_norm.extend(l);
            stencil.extend(s);
        }
        Ok(TransferOperator {
            grid,
            kernel: Kernel::Samples {
                n,
                weights,
                log_norm,
                stencil,
                scale,
            },
            closed_form,
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn is_closed_form(&self) -> bool {
        self.closed_form
    }

    /// Number of matrices in the frozen sample set (0 for the uniform
    /// closed form).
    pub fn n_samples(&self) -> usize {
        match &self.kernel {
            Kernel::Samples { n, .. } => *n,
            Kernel::Uniform { .. } => 0,
        }
    }

    /// `T_ϰ f` on the grid.
    pub fn apply(&self, f: &GridFunction, varkappa: f64) -> GridFunction {
        assert!(Arc::ptr_eq(f.grid(), &self.grid) || f.grid().len() == self.grid.len());
        let values = f.values();
        let out = match &self.kernel {
            Kernel::Uniform { scale } => {
                let q = self.grid.weights();
                let num: f64 = q.iter().zip(values).map(|(w, v)| w * v).sum();
                let den: f64 = q.iter().sum();
                vec![scale.moment(varkappa) * (num / den); self.grid.len()]
            }
            Kernel::Samples {
                n,
                weights,
                log_norm,
                stencil,
                scale,
            } => {
                let m = scale.as_ref().map_or(1.0, |s| s.moment(varkappa));
                let den: f64 = weights.iter().sum();
                (0..self.grid.len())
                    .into_par_iter()
                    .map(|j| {
                        let base = j * n;
                        let mut num = 0.0;
                        for (i, w) in weights.iter().enumerate() {
                            let k = base + i;
                            num += w * (varkappa * log_norm[k]).exp() * stencil[k].eval(values);
                        }
                        m * (num / den)
                    })
                    .collect()
            }
        };
        GridFunction::new(self.grid.clone(), out).expect("operator output matches its grid")
    }

    /// Power iteration from `start` (or `f ≡ 1`): returns `ρ̂`, the
    /// eigenfunction normalized to sup 1, and the number of sweeps.
    pub fn spectral_radius(
        &self,
        varkappa: f64,
        cfg: &OperatorConfig,
        start: Option<&GridFunction>,
    ) -> Result<(f64, GridFunction, usize)> {
        let mut f = match start {
            Some(s) => {
                let top = s.max();
                GridFunction::new(self.grid.clone(), s.values().iter().map(|v| v / top).collect())?
            }
            None => GridFunction::constant(self.grid.clone(), 1.0),
        };
        let mut change = f64::INFINITY;
        for sweep in 1..=cfg.power_iter_max {
            let mut g = self.apply(&f, varkappa);
            g.symmetrize();
            let rho = g.max();
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Numerical(format!(
                    "sup T f = {rho} at varkappa = {varkappa}, sweep {sweep}"
                )));
            }
            // divide rather than scale by 1/ρ so the sup is exactly 1
            let g = GridFunction::new(self.grid.clone(), g.values().iter().map(|v| v / rho).collect())?;
            change = g
                .values()
                .iter()
                .zip(f.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            f = g;
            if change <= cfg.power_iter_tol {
                return Ok((rho, f, sweep));
            }
        }
        Err(Error::NonConvergence {
            varkappa,
            iterations: cfg.power_iter_max,
            last_change: change,
        })
    }
}

fn check_grid(spec: &ModelSpec, grid: &SphereGrid) -> Result<()> {
    if grid.dim() != spec.dimension {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {} does not match model dimension {}",
            grid.dim(),
            spec.dimension
        )));
    }
    Ok(())
}

/// One application of `T_ϰ` to `f`.
///
/// With common random numbers the frozen sample set 0 serves every grid
/// point, so repeated calls with the same streams reuse it. Without, each grid
/// point draws its own `n_mc` matrices.
pub fn apply_t(
    spec: &ModelSpec,
    f: &GridFunction,
    varkappa: f64,
    cfg: &OperatorConfig,
    streams: &Streams,
) -> Result<GridFunction> {
    if !(varkappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("varkappa must be >= 0, got {varkappa}")));
    }
    let grid = f.grid().clone();
    if cfg.common_random_numbers || cfg.method == OperatorMethod::ClosedForm {
        let op = TransferOperator::build(spec, grid, cfg, streams, tag::OPERATOR, 0)?;
        return Ok(op.apply(f, varkappa));
    }
    spec.validate()?;
    check_grid(spec, &grid)?;
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = streams.child(tag::OPERATOR, 1).rng(tag::OPERATOR, j as u64);
            let x = grid.point(j);
            let mut num = 0.0;
            for _ in 0..cfg.n_mc {
                let y = spec.draw(&mut rng)?.m.row_action(x.coords());
                num += y.norm().powf(varkappa) * f.interpolate(&project(&y)?);
            }
            Ok(num / cfg.n_mc as f64)
        })
        .collect::<Result<_>>()?;
    GridFunction::new(grid, out)
}

/// Spectral radius and eigenfunction of `T_ϰ` with the primary sample set.
pub fn spectral_radius(
    spec: &ModelSpec,
    grid: Arc<SphereGrid>,
    varkappa: f64,
    cfg: &OperatorConfig,
    streams: &Streams,
) -> Result<(f64, GridFunction)> {
    cfg.validate()?;
    let op = TransferOperator::build(spec, grid, cfg, streams, tag::OPERATOR, 0)?;
    op.spectral_radius(varkappa, cfg, None).map(|(rho, f, _)| (rho, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn two_point_closed_form_values() {
        let spec = presets::two_point();
        let grid = Arc::new(SphereGrid::new(1, 0).unwrap());
        let op = TransferOperator::closed_form(&spec, grid.clone()).unwrap();
        let one = GridFunction::constant(grid, 1.0);
        let k = (7.0f64 / 3.0).log2();
        for v in op.apply(&one, k).values() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let (rho, r, _) = op.spectral_radius(1.0, &OperatorConfig::default(), None).unwrap();
        assert!((rho - 0.95).abs() < 1e-14);
        assert_eq!(r.values(), &[1.0, 1.0]);
    }

    #[test]
    fn rho_at_zero_is_exactly_one() {
        let grid = Arc::new(SphereGrid::new(2, 64).unwrap());
        let spec = presets::gaussian_perturbed();
        let cfg = OperatorConfig {
            n_mc: 1000,
            ..Default::default()
        };
        let op = TransferOperator::build(&spec, grid, &cfg, &Streams::new(3), tag::OPERATOR, 0).unwrap();
        let (rho, r, sweeps) = op.spectral_radius(0.0, &cfg, None).unwrap();
        assert_eq!(rho, 1.0);
        assert!(r.values().iter().all(|v| *v == 1.0));
        assert_eq!(sweeps, 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OperatorConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_mc = 10;
        assert!(cfg.validate().is_err());
    }
}
