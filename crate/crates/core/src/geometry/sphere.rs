use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// A point of the unit sphere `S^{d-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpherePoint(Vector);

impl SpherePoint {
    /// Wraps a vector already known to have unit length.
    pub(crate) fn new_unchecked(v: Vector) -> Self {
        debug_assert!((v.norm() - 1.0).abs() <= 1e-12, "not a unit vector: {v:?}");
        SpherePoint(v)
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        SpherePoint(Vector::basis(dim, i))
    }

    /// The point at angle `theta` on the circle.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SpherePoint(Vector::from_slice(&[c, s]))
    }

    #[inline]
    pub fn coords(&self) -> &Vector {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn neg(&self) -> Self {
        SpherePoint(self.0.neg())
    }

    /// Angle in `[0, 2π)` (d = 2).
    pub fn angle(&self) -> f64 {
        let a = self.0.get(1).atan2(self.0.get(0));
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }

    /// Great-circle distance.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        // atan2 form is accurate for nearby and antipodal points alike
        let dot = self.0.dot(&other.0);
        let cross = self.0.sub(&other.0.scale(dot)).norm();
        cross.atan2(dot)
    }
}

/// `x / |x|`.
pub fn project(x: &Vector) -> Result<SpherePoint> {
    let n = x.norm();
    if n > 0.0 && n.is_finite() {
        Ok(SpherePoint(x.scale(1.0 / n)))
    } else if n == 0.0 {
        Err(Error::ZeroVector)
    } else {
        Err(Error::Numerical(format!("cannot project non-finite vector {x:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let p = project(&Vector::from_slice(&[3.0, 4.0])).unwrap();
        assert!((p.coords().get(0) - 0.6).abs() < 1e-15 && (p.coords().get(1) - 0.8).abs() < 1e-15);
        let e1 = Vector::basis(3, 0);
        assert_eq!(project(&e1).unwrap().coords(), &e1);
        let p = project(&Vector::from_slice(&[-2.0, 0.0])).unwrap();
        assert_eq!(p.coords().as_slice(), &[-1.0, 0.0]);
        assert!(matches!(project(&Vector::zeros(2)), Err(Error::ZeroVector)));
    }

    #[test]
    fn distances() {
        let a = SpherePoint::from_angle(0.0);
        let b = SpherePoint::from_angle(1.0);
        assert!((a.distance(&b) - 1.0).abs() < 1e-14);
        assert!((a.distance(&a.neg()) - std::f64::consts::PI).abs() < 1e-14);
        assert!(
            (SpherePoint::basis(1, 0).distance(&SpherePoint::basis(1, 0).neg()) - std::f64::consts::PI).abs() < 1e-15
        );
    }
}
