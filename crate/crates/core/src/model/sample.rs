use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spec::{Family, ModelSpec, QLaw, RotationLaw, ScaleLaw};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Consecutive rejections after which a `GaussianPerturbed` draw gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: u32 = 10_000;

/// One draw of `(M, Q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub m: Mat,
    pub q: Vector,
}

/// Anything that produces i.i.d. copies of `(M, Q)`: the model itself or a
/// stopped version of it.
pub trait PairLaw: Sync {
    fn dimension(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairSample>;
    /// Typical `|Q|`, used to scale truncation bounds.
    fn q_scale(&self) -> f64;
}

impl PairLaw for ModelSpec {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairSample> {
        sample_pair_counted(self, rng).map(|(s, _)| s)
    }

    fn q_scale(&self) -> f64 {
        ModelSpec::q_scale(self)
    }
}

/// Draws one pair from the law described by `spec`.
pub fn sample_pair<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<PairSample> {
    sample_pair_counted(spec, rng).map(|(s, _)| s)
}

/// Like [`sample_pair`], also returning how many `GaussianPerturbed` draws were
/// rejected for exceeding the condition-number cap.
pub fn sample_pair_counted<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<(PairSample, u32)> {
    let (m, atom, rejections) = sample_m(spec, rng)?;
    let q = sample_q(spec, atom, rng);
    Ok((PairSample { m, q }, rejections))
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last atom with positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn sample_scale<R: Rng + ?Sized>(law: &ScaleLaw, rng: &mut R) -> f64 {
    match *law {
        ScaleLaw::Constant { value } => value,
        ScaleLaw::Lognormal { mu, sigma } => (mu + sigma * normal(rng)).exp(),
    }
}

/// Haar-distributed element of SO(d) (uniform sign for d = 1).
pub fn haar_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Mat {
    match dim {
        1 => Mat::scalar(1, if rng.random::<bool>() { 1.0 } else { -1.0 }),
        2 => Mat::rotation2(rng.random::<f64>() * std::f64::consts::TAU),
        _ => {
            // unit quaternion with i.i.d. normal coordinates is uniform on S³
            let (mut w, mut x, mut y, mut z);
            loop {
                w = normal(rng);
                x = normal(rng);
                y = normal(rng);
                z = normal(rng);
                let n = (w * w + x * x + y * y + z * z).sqrt();
                if n > 1e-12 {
                    w /= n;
                    x /= n;
                    y /= n;
                    z /= n;
                    break;
                }
            }
            Mat::from_rows(&[
                vec![
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                ],
                vec![
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                ],
                vec![
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ])
            .unwrap()
        }
    }
}

pub(crate) fn sample_rotation<R: Rng + ?Sized>(law: &RotationLaw, dim: usize, rng: &mut R) -> Mat {
    match law {
        RotationLaw::Identity => Mat::identity(dim),
        RotationLaw::Angle { radians } => Mat::rotation2(*radians),
        RotationLaw::Fixed { matrix } => *matrix,
        RotationLaw::Haar => haar_rotation(dim, rng),
    }
}

/// Draws `M`; returns it with the atom index (tabulated families) and the
/// number of rejected draws.
pub(crate) fn sample_m<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<(Mat, Option<usize>, u32)> {
    let d = spec.dimension;
    match &spec.family {
        Family::ScalarTwoPoint { atoms, weights } => {
            let i = categorical(weights, rng);
            Ok((Mat::scalar(1, atoms[i]), Some(i), 0))
        }
        Family::Custom { atoms, weights } => {
            let i = categorical(weights, rng);
            Ok((atoms[i], Some(i), 0))
        }
        Family::ScalarLognormal { mu, sigma } => Ok((Mat::scalar(1, (mu + sigma * normal(rng)).exp()), None, 0)),
        Family::Similarity { scale, rotation } => {
            let a = sample_scale(scale, rng);
            let o = sample_rotation(rotation, d, rng);
            Ok((o.scale(a), None, 0))
        }
        Family::GaussianPerturbed {
            gamma0,
            sigma,
            cond_cap,
        } => {
            let mut rejections = 0u32;
            loop {
                let mut m = *gamma0;
                for i in 0..d {
                    for j in 0..d {
                        m.set(i, j, m.get(i, j) + sigma * normal(rng));
                    }
                }
                if m.condition_number() <= *cond_cap {
                    return Ok((m, None, rejections));
                }
                rejections += 1;
                if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(Error::RejectionCap {
                        rejections,
                        cap: *cond_cap,
                    });
                }
            }
        }
    }
}

fn sample_q<R: Rng + ?Sized>(spec: &ModelSpec, atom: Option<usize>, rng: &mut R) -> Vector {
    match &spec.q {
        QLaw::Constant { value } => *value,
        QLaw::Atoms { atoms, weights } => atoms[categorical(weights, rng)],
        QLaw::Gaussian { mean, sd } => {
            let mut q = *mean;
            for i in 0..spec.dimension {
                q.set(i, q.get(i) + sd * normal(rng));
            }
            q
        }
        QLaw::ByAtom { values } => values[atom.expect("by_atom requires a tabulated family")],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::rng::{tag, Streams};

    #[test]
    fn two_point_support() {
        let spec = presets::two_point();
        let mut rng = Streams::new(1).rng(tag::AUDIT, 0);
        for _ in 0..1000 {
            let s = sample_pair(&spec, &mut rng).unwrap();
            let m = s.m.get(0, 0);
            assert!(m == 2.0 || m == 0.5);
            assert_eq!(s.q.as_slice(), &[1.0]);
        }
    }

    #[test]
    fn fixed_quarter_turn_similarity() {
        let spec = ModelSpec {
            dimension: 2,
            kappa0: 1.0,
            family: Family::Similarity {
                scale: ScaleLaw::Constant { value: 1.0 },
                rotation: RotationLaw::Angle {
                    radians: std::f64::consts::FRAC_PI_2,
                },
            },
            q: QLaw::Constant {
                value: Vector::from_slice(&[1.0, 0.0]),
            },
        };
        let mut rng = Streams::new(1).rng(tag::AUDIT, 0);
        let s = sample_pair(&spec, &mut rng).unwrap();
        assert_eq!(s.m, Mat::rotation2(std::f64::consts::FRAC_PI_2));
        assert!((s.m.operator_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_log_mean() {
        // law of large numbers on the generator: sd of the mean is 1e-3
        let spec = ModelSpec {
            dimension: 1,
            kappa0: 2.0,
            family: Family::ScalarLognormal { mu: -0.5, sigma: 1.0 },
            q: QLaw::Constant {
                value: Vector::from_slice(&[1.0]),
            },
        };
        let mut rng = Streams::new(7).rng(tag::AUDIT, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_pair(&spec, &mut rng).unwrap().m.get(0, 0).ln())
            .sum::<f64>()
            / n as f64;
        assert!((mean + 0.5).abs() < 0.005, "mean log m = {mean}");
    }

    #[test]
    fn haar_rotations_are_orthogonal_with_unit_determinant() {
        let mut rng = Streams::new(3).rng(tag::AUDIT, 0);
        for d in 1..=3 {
            for _ in 0..100 {
                let o = haar_rotation(d, &mut rng);
                let dev = o.mul(&o.transpose()).add(&Mat::identity(d).scale(-1.0)).frobenius();
                assert!(dev < 1e-12);
                if d > 1 {
                    assert!((o.det() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampled_m_is_always_invertible() {
        let mut rng = Streams::new(11).rng(tag::AUDIT, 0);
        for spec in [
            presets::two_point(),
            presets::scalar_lognormal(),
            presets::similarity_haar(),
            presets::gaussian_perturbed(),
        ] {
            for _ in 0..100_000 {
                let m = sample_pair(&spec, &mut rng).unwrap().m;
                let lam_min = m.min_singular().powi(2);
                assert!(lam_min > 0.0);
            }
        }
    }

    #[test]
    fn by_atom_pairs_q_with_m() {
        let spec = ModelSpec {
            dimension: 1,
            kappa0: 2.0,
            family: Family::ScalarTwoPoint {
                atoms: vec![2.0, 0.5],
                weights: vec![0.3, 0.7],
            },
            q: QLaw::ByAtom {
                values: vec![Vector::from_slice(&[-1.0]), Vector::from_slice(&[3.0])],
            },
        };
        spec.validate().unwrap();
        let mut rng = Streams::new(5).rng(tag::AUDIT, 0);
        for _ in 0..200 {
            let s = sample_pair(&spec, &mut rng).unwrap();
            let expected = if s.m.get(0, 0) == 2.0 { -1.0 } else { 3.0 };
            assert_eq!(s.q.get(0), expected);
        }
    }

    #[test]
    fn rejection_cap_is_reported() {
        let spec = ModelSpec {
            dimension: 2,
            kappa0: 1.0,
            family: Family::GaussianPerturbed {
                gamma0: Mat::identity(2),
                sigma: 1.0,
                cond_cap: 1.0 + 1e-9,
            },
            q: QLaw::Constant {
                value: Vector::from_slice(&[1.0, 0.0]),
            },
        };
        let mut rng = Streams::new(5).rng(tag::AUDIT, 0);
        assert!(matches!(sample_pair(&spec, &mut rng), Err(Error::RejectionCap { .. })));
    }
}
