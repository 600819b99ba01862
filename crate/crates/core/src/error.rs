use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("geodesic integration diverged: state component exceeded {bound}")]
    IntegrationDiverged { bound: f64 },

    #[error("adaptive integrator exceeded {0} steps")]
    StepLimit(usize),

    #[error("need at least 2 samples to build a discretization, got {0}")]
    InsufficientSamples(usize),

    #[error("negative atom mass {0} rejected in strict mode")]
    NegativeMass(f64),

    #[error("no candidate curve has a negative linearized score")]
    NoDescentCandidate,

    #[error("no feasible iterate inside the curve energy ball (bound {bound})")]
    BarrierViolation { bound: f64 },

    #[error("geodesic shooting did not converge (residual {residual:.3e})")]
    ShootingFailed { residual: f64 },

    #[error("closed-form log map only exists for epsilon = 1")]
    LogUnavailable,

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { what, msg: msg.into() }
    }
}
