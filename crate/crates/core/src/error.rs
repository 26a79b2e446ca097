use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside target support: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chain is reducible: state {0} is not mutually reachable with state 0")]
    ReducibleChain(usize),

    #[error("chain is not reversible (residual {0:.3e}); use the operator-norm routines instead")]
    NonReversible(f64),

    #[error("zero reference probability at index {0}")]
    ZeroDenominator(usize),

    #[error("quadrature residual {0:.3e} too large; refine the grid")]
    Renormalization(f64),

    #[error("state space of size {size} exceeds the limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("degenerate series: sample variance is zero")]
    DegenerateSeries,

    #[error("ODE solution blew up at t = {0}")]
    Blowup(f64),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
