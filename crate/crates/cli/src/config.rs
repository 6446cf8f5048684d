//! Run configuration: the `[model]` table plus optional per-stage sections.
//!
//! ```toml
//! [model]
//! dimension = 1
//! kappa0 = 3.0
//! family = { type = "scalar_two_point", atoms = [2.0, 0.5], weights = [0.3, 0.7] }
//! q = { type = "constant", value = [1.0] }
//!
//! [tail]
//! n_samples = 200000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kesten_core::error::Error;
use kesten_core::model::config::{locate_key, model_from_toml, parse_toml};
use kesten_core::model::ModelSpec;
use kesten_core::operator::OperatorConfig;
use kesten_core::regeneration::DEFAULT_RESIDUAL_BUDGET;
use kesten_core::tail::TailConfig;

use crate::Overrides;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Circle points for `d = 2`, subdivision level for `d = 3`; the
    /// dimension's default when absent.
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub n_samples: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { n_samples: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub n_steps: usize,
    pub n_chains: usize,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        LyapunovSection {
            n_steps: 10_000,
            n_chains: 32,
        }
    }
}

/// The shifted chain behind `π̂` and `α̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub n_steps: usize,
    pub burn_in: Option<usize>,
    /// Proposals per step for the importance-resampling sampler.
    pub n_prop: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            n_steps: 200_000,
            burn_in: None,
            n_prop: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenKernelChoice {
    /// Shifted kernel when it has an explicit density, base kernel otherwise.
    #[default]
    Auto,
    Base,
    Shifted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenSetChoice {
    /// Whole sphere for Haar kernels, atom overlap or a small set for
    /// `d = 1`, a density ball otherwise.
    #[default]
    Auto,
    WholeSphere,
    Doeblin,
    SmallSet,
    Ball,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegenSection {
    pub kernel: RegenKernelChoice,
    pub set: RegenSetChoice,
    /// Minorization mass for `whole_sphere` and `small_set`.
    pub p: Option<f64>,
    /// Center of `small_set` or `ball`; normalized on use.
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub n_steps: usize,
    pub residual_budget: usize,
    /// Run the residual-free variant instead (negative control).
    pub naive: bool,
}

impl Default for RegenSection {
    fn default() -> Self {
        RegenSection {
            kernel: RegenKernelChoice::Auto,
            set: RegenSetChoice::Auto,
            p: None,
            center: None,
            radius: 0.5,
            n_steps: 100_000,
            residual_budget: DEFAULT_RESIDUAL_BUDGET,
            naive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub lyapunov: LyapunovSection,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub regen: RegenSection,
}

fn located(source: &str, path: &str, err: Error) -> Error {
    match err {
        Error::InvalidArgument(message) | Error::InvalidModel(message) => Error::Config {
            line: locate_key(source, path),
            message,
        },
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml(source: &str) -> Result<Self, Error> {
        // located model validation first, then the remaining sections
        model_from_toml(source)?;
        let cfg: RunConfig = parse_toml(source)?;
        cfg.validate(source)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&source)
    }

    fn validate(&self, source: &str) -> Result<(), Error> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                line: locate_key(source, path),
                message,
            })
        };
        self.operator.validate().map_err(|e| located(source, "operator", e))?;
        self.tail.validate().map_err(|e| located(source, "tail", e))?;
        if self.audit.n_samples < kesten_core::model::audit::MIN_AUDIT_SAMPLES {
            return bad(
                "audit.n_samples",
                format!(
                    "audit.n_samples must be at least {}",
                    kesten_core::model::audit::MIN_AUDIT_SAMPLES
                ),
            );
        }
        if self.lyapunov.n_steps < 1000 || self.lyapunov.n_chains < 2 {
            return bad("lyapunov", "lyapunov needs n_steps >= 1000 and n_chains >= 2".into());
        }
        if self.chain.n_steps < 1000 || self.chain.n_prop == 0 {
            return bad("chain", "chain needs n_steps >= 1000 and n_prop >= 1".into());
        }
        if let Some(c) = &self.regen.center {
            if c.len() != self.model.dimension || c.iter().all(|v| *v == 0.0) {
                return bad(
                    "regen.center",
                    "regen.center must be a nonzero vector of the model dimension".into(),
                );
            }
        }
        if self.regen.n_steps == 0 || self.regen.residual_budget == 0 {
            return bad(
                "regen",
                "regen.n_steps and regen.residual_budget must be positive".into(),
            );
        }
        Ok(())
    }

    /// Applies command-line overrides and revalidates the touched sections.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), Error> {
        if let Some(g) = o.grid {
            self.grid.resolution = Some(g);
        }
        if let Some(n) = o.samples {
            self.tail.n_samples = n;
            self.tail.n_pairs = self.tail.n_pairs.min(n);
        }
        if let Some(t) = o.tol {
            self.tail.truncation.tol = t;
        }
        if o.tmin.is_some() {
            self.tail.t_min = o.tmin;
        }
        if o.tmax.is_some() {
            self.tail.t_max = o.tmax;
        }
        if let Some(n) = o.tpoints {
            self.tail.t_points = n;
        }
        self.tail.validate().map_err(|e| match e {
            Error::InvalidArgument(message) => Error::Config { line: None, message },
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
