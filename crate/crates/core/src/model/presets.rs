//! Built-in reference models with known analytic answers.

use super::spec::{Family, ModelSpec, QLaw, RotationLaw, ScaleLaw};
use crate::linalg::{Mat, Vector};

/// `M ∈ {2, 1/2}` with probabilities `{0.3, 0.7}`, `Q ≡ 1`.
///
/// `E M^κ = 1` at `κ = log₂(7/3)`, `β = -0.4 ln 2`.
pub fn two_point() -> ModelSpec {
    ModelSpec {
        dimension: 1,
        kappa0: 2.0,
        family: Family::ScalarTwoPoint {
            atoms: vec![2.0, 0.5],
            weights: vec![0.3, 0.7],
        },
        q: QLaw::Constant {
            value: Vector::from_slice(&[1.0]),
        },
    }
}

/// `log M ~ N(-0.25, 0.5)`, `Q ≡ 1`; `κ = 1`.
pub fn scalar_lognormal() -> ModelSpec {
    ModelSpec {
        dimension: 1,
        kappa0: 2.0,
        family: Family::ScalarLognormal {
            mu: -0.25,
            sigma: 0.5f64.sqrt(),
        },
        q: QLaw::Constant {
            value: Vector::from_slice(&[1.0]),
        },
    }
}

/// `M = A·O` in the plane with `log A ~ N(-0.5, 1)` and Haar `O`,
/// `Q ~ N(0, I)`; `κ = 1`, `α = 0.5`.
pub fn similarity_haar() -> ModelSpec {
    ModelSpec {
        dimension: 2,
        kappa0: 2.0,
        family: Family::Similarity {
            scale: ScaleLaw::Lognormal { mu: -0.5, sigma: 1.0 },
            rotation: RotationLaw::Haar,
        },
        q: QLaw::Gaussian {
            mean: Vector::zeros(2),
            sd: 1.0,
        },
    }
}

/// `M = Γ₀ + σG` in the plane with a non-normal `Γ₀`, so the eigenfunction is
/// not constant. `β ≈ -0.31`, `κ ≈ 2.2`; `κ₀ = 14` is where
/// `E inf_x |xM|^{κ₀}` first clears 1 comfortably.
pub fn gaussian_perturbed() -> ModelSpec {
    ModelSpec {
        dimension: 2,
        kappa0: 14.0,
        family: Family::GaussianPerturbed {
            gamma0: Mat::from_rows(&[vec![0.5, 0.3], vec![0.0, 0.3]]).unwrap(),
            sigma: 0.6,
            cond_cap: super::spec::DEFAULT_COND_CAP,
        },
        q: QLaw::Constant {
            value: Vector::from_slice(&[1.0, 0.5]),
        },
    }
}
