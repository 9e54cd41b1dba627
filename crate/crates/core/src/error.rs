use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatchetError {
    #[error("grid size mismatch: {left} vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid grid function: {0}")]
    InvalidGrid(String),

    #[error("density mass {mass} differs from 1 beyond tolerance {tol:e}")]
    MassMismatch { mass: f64, tol: f64 },

    #[error("reference density has a non-positive cell at index {index} (value {value})")]
    NonPositive { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature failed to converge on [{a}, {b}]: error estimate {estimate:e}")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("no convergence after {iterations} iterations: residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ODE integration failed at t = {t}: step size underflow")]
    StepUnderflow { t: f64 },

    #[error("forces share a zero near x = {x}")]
    CommonZero { x: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, RatchetError>;
