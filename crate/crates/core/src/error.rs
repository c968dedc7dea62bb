use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("{context}: dimension {dim} is odd, expected an even dimension")]
    OddDimension { context: String, dim: usize },

    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("s = {s} lies within {distance:.3e} of a pole")]
    Pole { s: Complex64, distance: f64 },

    #[error("hypothesis not satisfied: {what} (residual {residual:.3e})")]
    Hypothesis { what: String, residual: f64 },

    #[error("not physically realizable: {0}")]
    NotRealizable(String),

    #[error("ill-posed feedback loop: smallest singular value of I - S22*Sb is {sigma_min:.3e}")]
    IllPosedLoop { sigma_min: f64 },

    #[error("{field} is not Hermitian-compatible after reduction (residual {residual:.3e})")]
    Convention { field: &'static str, residual: f64 },

    #[error("integration diverged at t = {t}; try a smaller dt")]
    Unstable { t: f64 },

    #[error("singular measurement noise covariance")]
    SingularNoise,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(context: &str, expected: (usize, usize), found: (usize, usize)) -> Error {
    Error::Shape {
        context: context.to_string(),
        expected: format!("{}x{}", expected.0, expected.1),
        found: format!("{}x{}", found.0, found.1),
    }
}
