use std::fmt;

/// Errors surfaced by the estimation and simulation routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Precondition violation: bad dimensions, negative rates, invalid grids.
    InvalidInput(String),
    /// A covariance lost positive semidefiniteness beyond tolerance; the
    /// integration step is too coarse for the model's rates.
    StepSize(String),
    /// A matrix that must be inverted is singular or below the pivot floor.
    IllConditioned(String),
    /// The variance equation did not reach a fixed point within the step
    /// budget (e.g. an undriven oscillatory model).
    NoSteadyState(String),
    /// A quadrature failed to converge to the requested tolerance.
    Precision(String),
    /// The requested combination of model and method is not supported.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::StepSize(msg) => write!(f, "step-size error: {msg}"),
            Error::IllConditioned(msg) => write!(f, "ill-conditioned: {msg}"),
            Error::NoSteadyState(msg) => write!(f, "no steady state: {msg}"),
            Error::Precision(msg) => write!(f, "precision error: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
