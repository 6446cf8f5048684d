use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector, MAX_DIM};

/// Default cap on the condition number of a `GaussianPerturbed` draw.
pub const DEFAULT_COND_CAP: f64 = 1e6;

const WEIGHT_TOL: f64 = 1e-12;

/// Law of the random scalar `A` in a similarity `M = A·O`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleLaw {
    Constant {
        value: f64,
    },
    /// `log A ~ N(mu, sigma²)`
    Lognormal {
        mu: f64,
        sigma: f64,
    },
}

impl ScaleLaw {
    /// `E A^ϰ`
    pub fn moment(&self, varkappa: f64) -> f64 {
        match *self {
            ScaleLaw::Constant { value } => value.abs().powf(varkappa),
            ScaleLaw::Lognormal { mu, sigma } => (varkappa * mu + 0.5 * varkappa * varkappa * sigma * sigma).exp(),
        }
    }
}

/// Law of the orthogonal factor `O` in a similarity `M = A·O`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum RotationLaw {
    Identity,
    /// Planar rotation by a fixed angle (d = 2 only).
    Angle {
        radians: f64,
    },
    Fixed {
        matrix: Mat,
    },
    /// Haar measure on SO(d) for d ≥ 2, uniform on {±1} for d = 1.
    Haar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Tabulated scalar law: `M = atoms[i]` with probability `weights[i]`.
    ScalarTwoPoint { atoms: Vec<f64>, weights: Vec<f64> },
    /// `log M ~ N(mu, sigma²)`, d = 1.
    ScalarLognormal { mu: f64, sigma: f64 },
    /// `M = A·O`.
    Similarity { scale: ScaleLaw, rotation: RotationLaw },
    /// `M = Γ₀ + σ G`, `G` with i.i.d. standard normal entries, conditioned on
    /// `cond(M) <= cond_cap`.
    GaussianPerturbed {
        gamma0: Mat,
        sigma: f64,
        #[serde(default = "default_cond_cap")]
        cond_cap: f64,
    },
    /// Tabulated matrix law.
    Custom { atoms: Vec<Mat>, weights: Vec<f64> },
}

fn default_cond_cap() -> f64 {
    DEFAULT_COND_CAP
}

/// Law of `Q`. All variants except `ByAtom` are independent of `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum QLaw {
    Constant {
        value: Vector,
    },
    Atoms {
        atoms: Vec<Vector>,
        weights: Vec<f64>,
    },
    /// `Q ~ N(mean, sd² I)`
    Gaussian {
        mean: Vector,
        sd: f64,
    },
    /// `Q = values[i]` whenever `M` takes its `i`-th tabulated atom.
    ByAtom {
        values: Vec<Vector>,
    },
}

/// Full description of the law of `(M, Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dimension: usize,
    pub kappa0: f64,
    pub family: Family,
    pub q: QLaw,
}

/// A validation problem, located by a dotted path relative to the spec.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecIssue {
    pub path: String,
    pub message: String,
}

fn check_weights(path: &str, weights: &[f64], n: usize, issues: &mut Vec<SpecIssue>) {
    if weights.len() != n {
        issues.push(SpecIssue {
            path: path.into(),
            message: format!("expected {n} weights, got {}", weights.len()),
        });
        return;
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        issues.push(SpecIssue {
            path: path.into(),
            message: "weights must be finite and nonnegative".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        issues.push(SpecIssue {
            path: path.into(),
            message: format!("weights sum to {total}, not 1"),
        });
    }
}

impl ModelSpec {
    /// All validation problems, empty when the spec is valid.
    pub fn issues(&self) -> Vec<SpecIssue> {
        let mut issues = Vec::new();
        let d = self.dimension;
        let mut push = |path: &str, message: String| {
            issues.push(SpecIssue {
                path: path.into(),
                message,
            })
        };
        if !(1..=MAX_DIM).contains(&d) {
            push("dimension", format!("dimension must be 1..={MAX_DIM}, got {d}"));
            return issues;
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            push("kappa0", format!("kappa0 must be positive, got {}", self.kappa0));
        }
        let mut weight_issues = Vec::new();
        match &self.family {
            Family::ScalarTwoPoint { atoms, weights } => {
                if d != 1 {
                    push("dimension", "scalar_two_point requires dimension = 1".into());
                }
                if atoms.is_empty() {
                    push("family.atoms", "at least one atom is required".into());
                }
                if atoms.iter().any(|a| *a == 0.0 || !a.is_finite()) {
                    push("family.atoms", "atoms must be finite and nonzero (M invertible)".into());
                }
                check_weights("family.weights", weights, atoms.len(), &mut weight_issues);
            }
            Family::ScalarLognormal { mu, sigma } => {
                if d != 1 {
                    push("dimension", "scalar_lognormal requires dimension = 1".into());
                }
                if !mu.is_finite() || !(sigma.is_finite() && *sigma >= 0.0) {
                    push("family.sigma", "mu must be finite and sigma nonnegative".into());
                }
            }
            Family::Similarity { scale, rotation } => {
                match scale {
                    ScaleLaw::Constant { value } => {
                        if !(value.is_finite() && *value > 0.0) {
                            push("family.scale.value", "scale must be positive".into());
                        }
                    }
                    ScaleLaw::Lognormal { mu, sigma } => {
                        if !mu.is_finite() || !(sigma.is_finite() && *sigma >= 0.0) {
                            push("family.scale.sigma", "mu must be finite and sigma nonnegative".into());
                        }
                    }
                }
                match rotation {
                    RotationLaw::Angle { .. } if d != 2 => {
                        push("family.rotation", "an angle rotation requires dimension = 2".into())
                    }
                    RotationLaw::Fixed { matrix } => {
                        if matrix.dim() != d {
                            push("family.rotation.matrix", "matrix dimension mismatch".into());
                        } else {
                            let mmt = matrix.mul(&matrix.transpose());
                            let dev = mmt.add(&Mat::identity(d).scale(-1.0)).frobenius();
                            if dev > 1e-9 {
                                push(
                                    "family.rotation.matrix",
                                    format!("matrix is not orthogonal (|O Oᵀ - I| = {dev:e})"),
                                );
                            }
                        }
                    }
                    _ => {}
                }
            }
            Family::GaussianPerturbed {
                gamma0,
                sigma,
                cond_cap,
            } => {
                if gamma0.dim() != d {
                    push("family.gamma0", "gamma0 dimension mismatch".into());
                } else if !gamma0.condition_number().is_finite() {
                    push("family.gamma0", "gamma0 must be invertible".into());
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    push("family.sigma", "sigma must be positive".into());
                }
                if !(*cond_cap > 1.0) {
                    push("family.cond_cap", "cond_cap must exceed 1".into());
                }
            }
            Family::Custom { atoms, weights } => {
                if atoms.is_empty() {
                    push("family.atoms", "at least one atom is required".into());
                }
                for (i, a) in atoms.iter().enumerate() {
                    if a.dim() != d {
                        push("family.atoms", format!("atom {i} has wrong dimension"));
                    } else if !a.is_finite() || !a.condition_number().is_finite() {
                        push("family.atoms", format!("atom {i} is not invertible"));
                    }
                }
                check_weights("family.weights", weights, atoms.len(), &mut weight_issues);
            }
        }
        issues.extend(weight_issues);

        let tabulated_len = self.m_atoms().map(|a| a.len());
        match &self.q {
            QLaw::Constant { value } => {
                if value.dim() != d || !value.is_finite() {
                    issues.push(SpecIssue {
                        path: "q.value".into(),
                        message: format!("Q must be a finite {d}-vector"),
                    });
                }
            }
            QLaw::Atoms { atoms, weights } => {
                if atoms.is_empty() || atoms.iter().any(|a| a.dim() != d || !a.is_finite()) {
                    issues.push(SpecIssue {
                        path: "q.atoms".into(),
                        message: format!("Q atoms must be finite {d}-vectors"),
                    });
                }
                check_weights("q.weights", weights, atoms.len(), &mut issues);
            }
            QLaw::Gaussian { mean, sd } => {
                if mean.dim() != d || !mean.is_finite() {
                    issues.push(SpecIssue {
                        path: "q.mean".into(),
                        message: format!("mean must be a finite {d}-vector"),
                    });
                }
                if !(sd.is_finite() && *sd >= 0.0) {
                    issues.push(SpecIssue {
                        path: "q.sd".into(),
                        message: "sd must be nonnegative".into(),
                    });
                }
            }
            QLaw::ByAtom { values } => match tabulated_len {
                Some(n) if matches!(self.family, Family::ScalarTwoPoint { .. } | Family::Custom { .. }) => {
                    if values.len() != n || values.iter().any(|v| v.dim() != d || !v.is_finite()) {
                        issues.push(SpecIssue {
                            path: "q.values".into(),
                            message: format!("expected {n} finite {d}-vectors, one per atom of M"),
                        });
                    }
                }
                _ => issues.push(SpecIssue {
                    path: "q".into(),
                    message: "by_atom dependence requires a tabulated family".into(),
                }),
            },
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        match self.issues().into_iter().next() {
            None => Ok(()),
            Some(issue) => Err(Error::InvalidModel(format!("{}: {}", issue.path, issue.message))),
        }
    }

    /// The finitely supported law of `M` as `(atom, probability)` pairs, when it
    /// has one. Deterministic similarities count as a single atom.
    pub fn m_atoms(&self) -> Option<Vec<(Mat, f64)>> {
        match &self.family {
            Family::ScalarTwoPoint { atoms, weights } => Some(
                atoms
                    .iter()
                    .zip(weights)
                    .map(|(&a, &w)| (Mat::scalar(1, a), w))
                    .collect(),
            ),
            Family::Custom { atoms, weights } => Some(atoms.iter().copied().zip(weights.iter().copied()).collect()),
            Family::Similarity {
                scale: ScaleLaw::Constant { value },
                rotation,
            } => {
                let o = match rotation {
                    RotationLaw::Identity => Mat::identity(self.dimension),
                    RotationLaw::Angle { radians } => Mat::rotation2(*radians),
                    RotationLaw::Fixed { matrix } => *matrix,
                    RotationLaw::Haar => return None,
                };
                Some(vec![(o.scale(*value), 1.0)])
            }
            _ => None,
        }
    }

    /// True when `|xM|` does not depend on `x`, i.e. `M` is a similarity.
    pub fn similarity_parts(&self) -> Option<(ScaleLaw, RotationLaw)> {
        match &self.family {
            Family::Similarity { scale, rotation } => Some((scale.clone(), rotation.clone())),
            Family::ScalarLognormal { mu, sigma } => {
                Some((ScaleLaw::Lognormal { mu: *mu, sigma: *sigma }, RotationLaw::Identity))
            }
            _ => None,
        }
    }

    /// A typical size of `|Q|`, used as the scale of truncation bounds.
    pub fn q_scale(&self) -> f64 {
        let s = match &self.q {
            QLaw::Constant { value } => value.norm(),
            QLaw::Atoms { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| w * a.norm()).sum(),
            QLaw::Gaussian { mean, sd } => (mean.dot(mean) + self.dimension as f64 * sd * sd).sqrt(),
            QLaw::ByAtom { values } => {
                let weights: Vec<f64> = self
                    .m_atoms()
                    .map(|a| a.iter().map(|(_, w)| *w).collect())
                    .unwrap_or_default();
                values.iter().zip(weights).map(|(v, w)| w * v.norm()).sum()
            }
        };
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}
