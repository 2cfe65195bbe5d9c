use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value{}: {context}", iterate_suffix(*.iterate))]
    NonFinite {
        iterate: Option<usize>,
        context: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("jacobian method incompatible with field: {0}")]
    MethodIncompatible(String),

    #[error("variable index {var} out of range for {nvars} variables")]
    VarOutOfRange { var: usize, nvars: usize },

    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("term-count ceiling of {limit} exceeded ({reached} terms)")]
    TermLimit { limit: usize, reached: usize },

    #[error("directions are not mutually orthogonal (gram residual {residual:e})")]
    NonOrthogonal { residual: f64 },

    #[error("direction {index} is the zero vector")]
    ZeroDirection { index: usize },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("{failed} of {total} samples failed to evaluate")]
    TooManyFailures { failed: usize, total: usize },

    #[error("refused: {0}")]
    Refused(String),

    #[error("singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),
}

fn iterate_suffix(iterate: Option<usize>) -> String {
    match iterate {
        Some(i) => format!(" at iterate {i}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
