use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("fields live on different grids")]
    GridMismatch,

    /// A negative fractional power was requested for a field whose mean does
    /// not vanish.
    #[error("zero mode must vanish (|mean component| = {mean_l2:.3e}, field L2 = {field_l2:.3e})")]
    ZeroModeViolation { mean_l2: f64, field_l2: f64 },

    #[error("no lattice wavenumber in band [{k_lo}, {k_hi}]")]
    BandEmpty { k_lo: f64, k_hi: f64 },

    #[error(
        "fixed-point iteration diverged after {iterations} iterations (residual {residual:.3e})"
    )]
    Diverged { iterations: usize, residual: f64 },

    #[error("steady state has not converged")]
    NotConverged,

    #[error("tail mass {fraction:.3e} exceeds limit {limit:.1e}; field too wide for the box")]
    TailMassExceeded { fraction: f64, limit: f64 },

    #[error("blow-up guard tripped at t = {time}: {quantity}")]
    Instability { time: f64, quantity: String },

    #[error("insufficient data for rate fit: {found} samples in window, need {required}")]
    InsufficientData { found: usize, required: usize },

    #[error("rate fit needs positive values; got {value} at t = {time}")]
    NonpositiveValues { time: f64, value: f64 },

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("malformed field dump {path}: {message}")]
    BadDump { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
