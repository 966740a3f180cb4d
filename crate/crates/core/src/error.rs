use thiserror::Error;

/// Errors raised by the model, estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("hazard overflow at t={t}: survival is numerically zero ({detail})")]
    Overflow { t: f64, detail: String },
    #[error("event-time inversion saturated for cumulative hazard target {target}")]
    Saturation { target: f64 },
    #[error("unknown strata key `{0}`")]
    UnknownStrata(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("incomplete life table: {missing} missing cells, first: {first:?}")]
    IncompleteTable { missing: usize, first: Vec<String> },
    #[error("non-finite objective at stencil point for coordinate {coordinate}")]
    NonFiniteStencil { coordinate: usize },
    #[error("covariance unavailable: {0}")]
    NoCovariance(String),
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("cannot initialise: {0}")]
    Initialisation(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("simulation study failed: {0}")]
    Study(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
