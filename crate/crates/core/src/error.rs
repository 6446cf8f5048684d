use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{}", match line { Some(l) => format!("config error at line {l}: {message}"), None => format!("config error: {message}") })]
    Config { line: Option<usize>, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection cap exceeded: {rejections} consecutive draws had condition number above {cap:e}")]
    RejectionCap { rejections: u32, cap: f64 },

    #[error("cannot project the zero vector onto the sphere")]
    ZeroVector,

    #[error("numerical corruption: {0}")]
    Numerical(String),

    #[error("power iteration at varkappa = {varkappa} did not converge within {iterations} sweeps (last relative change {last_change:e})")]
    NonConvergence {
        varkappa: f64,
        iterations: usize,
        last_change: f64,
    },

    #[error("no sign change of log rho in (0, kappa0]: {reason} (MC error estimate {mc_error:e})")]
    Bracketing {
        reason: String,
        curve: Vec<(f64, f64)>,
        mc_error: f64,
    },

    #[error("overflow in dense products: {0}")]
    Overflow(String),

    #[error("drift estimate {alpha} is non-positive beyond 3 standard errors ({std_error})")]
    NonPositiveDrift { alpha: f64, std_error: f64 },

    #[error("too few regeneration cycles: need {needed}, have {have}")]
    TooFewCycles { needed: usize, have: usize },

    #[error("residual sampler exhausted its budget of {0} proposals")]
    ResidualBudget(usize),

    #[error("minorization violated: {0}")]
    MinorizationViolated(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
