use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the geometry, initial-data, flow and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric left the Kaehler cone: min eigenvalue {min_eig:.3e} at point {index}")]
    KaehlerConeViolation { min_eig: f64, index: usize },

    #[error("singular metric at point {index} (det = {det:.3e})")]
    SingularMetric { det: f64, index: usize },

    #[error("invalid potential spec: {0}")]
    InvalidSpec(String),

    #[error("approximation levels {level} and {next} are not decreasing (excess {excess:.3e})")]
    MonotonicityFailure { level: usize, next: usize, excess: f64 },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),

    #[error("step size underflow at t = {t:.6e}: dt = {dt:.3e} < dt_min = {dt_min:.3e}")]
    StepSizeUnderflow { t: f64, dt: f64, dt_min: f64 },

    #[error("flow failed at t = {t:.6e}: {source}")]
    FlowFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("newton iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("incompatible data: total mass {mass:.12e}, expected {expected:.12e}")]
    IncompatibleData { mass: f64, expected: f64 },

    #[error("density has total mass {mass:.12e}, expected {expected:.12e}")]
    MassMismatch { mass: f64, expected: f64 },

    #[error("density lost positivity (min {min:.3e})")]
    PositivityLoss { min: f64 },

    #[error("trajectories are not comparable: {0}")]
    ConfigMismatch(String),

    #[error("bad snapshot {path}: {reason}")]
    BadSnapshot { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach the failure time to a flow error.
    pub fn at_time(self, t: f64) -> Error {
        match self {
            e @ Error::FlowFailed { .. } => e,
            e => Error::FlowFailed { t, source: Box::new(e) },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
