//! Split-chain (coin-tossing) regeneration from explicit minorization data
//! `inf_{x ∈ 𝔯} P(x, ·) ≥ p φ`.

mod diagnostics;
mod kernel;
pub mod presets;
mod split;

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{project, SphereGrid, SpherePoint};
use crate::linalg::Vector;

pub use diagnostics::{
    occupation, regeneration_increment_bounds, validate_regeneration, GeometricFit, IncrementBounds,
    OccupationEstimate, RegenDiagnostics, MIN_BOUND_CYCLES, MIN_CYCLES,
};
pub use kernel::{sphere_measure, RegenKernel};
pub use split::{run_split_chain, Cycle, RegenTrace, SplitMode, DEFAULT_RESIDUAL_BUDGET};

/// The regeneration set `𝔯`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RegenSet {
    WholeSphere,
    /// Closed geodesic ball.
    Ball {
        center: SpherePoint,
        radius: f64,
    },
}

impl RegenSet {
    pub fn contains(&self, x: &SpherePoint) -> bool {
        match self {
            RegenSet::WholeSphere => true,
            RegenSet::Ball { center, radius } => center.distance(x) <= radius + 1e-12,
        }
    }
}

/// Measure of a closed geodesic ball of radius `r` under the reference
/// measure of [`sphere_measure`].
pub fn cap_measure(dim: usize, r: f64) -> f64 {
    let r = r.clamp(0.0, PI);
    match dim {
        1 => {
            if r >= PI {
                2.0
            } else {
                1.0
            }
        }
        2 => 2.0 * r,
        _ => 2.0 * PI * (1.0 - r.cos()),
    }
}

/// The minorizing probability `φ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Phi {
    /// Normalized reference measure on the whole sphere.
    UniformSphere,
    UniformBall {
        center: SpherePoint,
        radius: f64,
    },
    /// Finitely many points; only meaningful for `d = 1` kernels.
    Atoms {
        points: Vec<SpherePoint>,
        weights: Vec<f64>,
    },
}

impl Phi {
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> SpherePoint {
        match self {
            Phi::UniformSphere => uniform_ball(&SpherePoint::basis(dim, 0), PI, rng),
            Phi::UniformBall { center, radius } => uniform_ball(center, *radius, rng),
            Phi::Atoms { points, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (p, w) in points.iter().zip(weights) {
                    if u < *w {
                        return *p;
                    }
                    u -= w;
                }
                *points.last().expect("validated non-empty")
            }
        }
    }

    /// Density against the reference measure.
    pub fn density(&self, y: &SpherePoint) -> f64 {
        match self {
            Phi::UniformSphere => 1.0 / sphere_measure(y.dim()),
            Phi::UniformBall { center, radius } => {
                if center.distance(y) <= radius + 1e-12 {
                    1.0 / cap_measure(y.dim(), *radius)
                } else {
                    0.0
                }
            }
            Phi::Atoms { points, weights } => {
                let total: f64 = weights.iter().sum();
                points
                    .iter()
                    .zip(weights)
                    .filter(|(p, _)| p.distance(y) < 1e-12)
                    .map(|(_, w)| w / total)
                    .sum()
            }
        }
    }

    /// Points where the minorization is checked.
    fn probe_points(&self, dim: usize) -> Vec<SpherePoint> {
        match self {
            Phi::Atoms { points, .. } => points.clone(),
            _ => {
                let mut out: Vec<SpherePoint> = probe_grid(dim)
                    .points()
                    .iter()
                    .filter(|y| self.density(y) > 0.0)
                    .copied()
                    .collect();
                if let Phi::UniformBall { center, .. } = self {
                    out.push(*center);
                }
                out
            }
        }
    }
}

pub(super) fn probe_grid(dim: usize) -> SphereGrid {
    let res = match dim {
        2 => 720,
        _ => 3,
    };
    SphereGrid::new(dim, res).expect("d <= 3 checked by caller")
}

/// Uniform draw from the closed ball of geodesic radius `radius` about
/// `center`.
fn uniform_ball<R: Rng + ?Sized>(center: &SpherePoint, radius: f64, rng: &mut R) -> SpherePoint {
    let r = radius.clamp(0.0, PI);
    match center.dim() {
        1 => {
            if r >= PI && rng.random::<bool>() {
                center.neg()
            } else {
                *center
            }
        }
        2 => SpherePoint::from_angle(center.angle() + r * (2.0 * rng.random::<f64>() - 1.0)),
        _ => {
            // cos θ is uniform on [cos r, 1] for the area measure
            let c = r.cos();
            let cos_t = c + (1.0 - c) * rng.random::<f64>();
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let e1 = *center.coords();
            let helper = if e1.get(0).abs() < 0.9 {
                Vector::basis(3, 0)
            } else {
                Vector::basis(3, 1)
            };
            let e2 = e1.cross(&helper);
            let e2 = e2.scale(1.0 / e2.norm());
            let e3 = e1.cross(&e2);
            let v = e1
                .scale(cos_t)
                .add(&e2.scale(sin_t * phi.cos()))
                .add(&e3.scale(sin_t * phi.sin()));
            project(&v).expect("unit combination")
        }
    }
}

/// Minorization data `(𝔯, p, φ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinorizationSpec {
    pub dim: usize,
    pub set: RegenSet,
    pub p: f64,
    pub phi: Phi,
}

impl MinorizationSpec {
    /// Checks `p ∈ (0, 1)`, dimensions and that `φ` lives inside `𝔯`.
    pub fn new(dim: usize, set: RegenSet, p: f64, phi: Phi) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=3).contains(&dim) {
            return bad(format!("regeneration is implemented for d <= 3, not {dim}"));
        }
        if !(p > 0.0 && p < 1.0) {
            return bad(format!("minorization mass p = {p} must lie in (0, 1)"));
        }
        if let RegenSet::Ball { center, radius } = &set {
            if center.dim() != dim || !(*radius >= 0.0) {
                return bad("regeneration ball must have the model dimension and radius >= 0".into());
            }
        }
        match &phi {
            Phi::UniformSphere => {
                if set != RegenSet::WholeSphere {
                    return Err(Error::MinorizationViolated(
                        "uniform φ on the sphere needs the whole sphere as regeneration set".into(),
                    ));
                }
            }
            Phi::UniformBall { center, radius } => {
                if center.dim() != dim || !(*radius >= 0.0) || (dim > 1 && *radius == 0.0) {
                    return bad("φ ball must have the model dimension and positive radius".into());
                }
                if let RegenSet::Ball { center: c, radius: r } = &set {
                    if c.distance(center) + radius > r + 1e-12 {
                        return Err(Error::MinorizationViolated(
                            "φ ball is not inside the regeneration set".into(),
                        ));
                    }
                }
            }
            Phi::Atoms { points, weights } => {
                if points.is_empty()
                    || points.len() != weights.len()
                    || weights.iter().any(|w| !(*w >= 0.0))
                    || !(weights.iter().sum::<f64>() > 0.0)
                {
                    return bad("φ atoms need matching non-negative weights with positive sum".into());
                }
                if points.iter().any(|q| q.dim() != dim || !set.contains(q)) {
                    return Err(Error::MinorizationViolated(
                        "φ atom outside the regeneration set".into(),
                    ));
                }
            }
        }
        Ok(MinorizationSpec { dim, set, p, phi })
    }

    /// Verifies `P(x, ·) ≥ p φ` for `x` on a probe grid of `𝔯` and `y` on a
    /// probe grid of `supp φ`.
    pub fn check_against(&self, kernel: &RegenKernel) -> Result<()> {
        if kernel.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "kernel dimension {} differs from minorization dimension {}",
                kernel.dim(),
                self.dim
            )));
        }
        if matches!(self.phi, Phi::Atoms { .. }) && self.dim > 1 {
            return Err(Error::MinorizationViolated(
                "atomic φ cannot be dominated by a kernel with a density".into(),
            ));
        }
        let mut xs: Vec<SpherePoint> = probe_grid(self.dim)
            .points()
            .iter()
            .filter(|x| self.set.contains(x))
            .copied()
            .collect();
        if let RegenSet::Ball { center, .. } = &self.set {
            xs.push(*center);
        }
        let ys = self.phi.probe_points(self.dim);
        for x in &xs {
            for y in &ys {
                let need = self.p * self.phi.density(y);
                let have = kernel.density(x, y);
                if need > have * (1.0 + 1e-9) {
                    return Err(Error::MinorizationViolated(format!(
                        "P(x, ·) density {have:.4e} < p φ = {need:.4e} at x = {:?}, y = {:?}",
                        x.coords().as_slice(),
                        y.coords().as_slice()
                    )));
                }
            }
        }
        Ok(())
    }
}
