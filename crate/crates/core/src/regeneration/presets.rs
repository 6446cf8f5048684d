//! Ready-made minorization data.

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;

use super::{cap_measure, probe_grid, MinorizationSpec, Phi, RegenKernel, RegenSet};

/// Conservative factor applied to density lower bounds.
pub const DENSITY_SAFETY: f64 = 0.8;

/// Whole-sphere set with the normalized reference measure as `φ`; valid for
/// any kernel whose density is at least `p / |S|` everywhere, e.g. the Haar
/// similarity kernel for every `p < 1`.
pub fn whole_sphere(dim: usize, p: f64) -> Result<MinorizationSpec> {
    MinorizationSpec::new(dim, RegenSet::WholeSphere, p, Phi::UniformSphere)
}

fn pair() -> [SpherePoint; 2] {
    let plus = SpherePoint::basis(1, 0);
    [plus.neg(), plus]
}

/// Whole-sphere Doeblin data for a `d = 1` kernel from the atom overlap
/// `p = Σ_y min_x P(x, {y})`, capped at 0.999.
pub fn tabulated_doeblin(kernel: &RegenKernel) -> Result<MinorizationSpec> {
    if kernel.dim() != 1 {
        return Err(Error::Unsupported("atom-overlap minorization needs d = 1".into()));
    }
    let ys = pair();
    let mins: Vec<f64> = ys
        .iter()
        .map(|y| ys.iter().map(|x| kernel.density(x, y)).fold(f64::INFINITY, f64::min))
        .collect();
    let overlap: f64 = mins.iter().sum();
    if !(overlap > 0.0) {
        return Err(Error::MinorizationViolated(
            "kernel rows have disjoint support, no whole-sphere minorization".into(),
        ));
    }
    MinorizationSpec::new(
        1,
        RegenSet::WholeSphere,
        overlap.min(0.999),
        Phi::Atoms {
            points: ys.to_vec(),
            weights: mins,
        },
    )
}

/// Small set `{x0}` of a `d = 1` kernel with `φ = δ_{x0}`; needs
/// `p ≤ P(x0, {x0})`.
pub fn tabulated_small_set(kernel: &RegenKernel, x0: SpherePoint, p: f64) -> Result<MinorizationSpec> {
    if kernel.dim() != 1 {
        return Err(Error::Unsupported("atomic small sets need d = 1".into()));
    }
    let stay = kernel.density(&x0, &x0);
    if p > stay {
        return Err(Error::MinorizationViolated(format!(
            "p = {p} exceeds P(x0, {{x0}}) = {stay}"
        )));
    }
    MinorizationSpec::new(
        1,
        RegenSet::Ball {
            center: x0,
            radius: 0.0,
        },
        p,
        Phi::Atoms {
            points: vec![x0],
            weights: vec![1.0],
        },
    )
}

/// Ball `B_δ(center)` as both set and support of a uniform `φ`, with
/// `p = DENSITY_SAFETY · inf f_x(y) · |B_δ|`, the infimum taken over probe
/// grids of `x, y ∈ B_δ`.
pub fn density_ball(kernel: &RegenKernel, center: SpherePoint, radius: f64) -> Result<MinorizationSpec> {
    let dim = kernel.dim();
    if dim < 2 {
        return Err(Error::Unsupported("density balls need d >= 2".into()));
    }
    let mut pts: Vec<SpherePoint> = probe_grid(dim)
        .points()
        .iter()
        .filter(|x| center.distance(x) <= radius)
        .copied()
        .collect();
    pts.push(center);
    let inf = pts
        .iter()
        .flat_map(|x| pts.iter().map(move |y| kernel.density(x, y)))
        .fold(f64::INFINITY, f64::min);
    let p = DENSITY_SAFETY * inf * cap_measure(dim, radius);
    MinorizationSpec::new(
        dim,
        RegenSet::Ball { center, radius },
        p,
        Phi::UniformBall { center, radius },
    )
}
