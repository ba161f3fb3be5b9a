use thiserror::Error;

/// Errors raised by the numerics and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: x = {x} is below the domain start {low}")]
    Domain { x: f64, low: f64 },

    #[error("non-finite or non-positive value in {what} at x = {x}")]
    Overflow { what: String, x: f64 },

    #[error("finite-difference step underflowed at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("no monotone threshold found up to {grid_end}")]
    ThresholdNotFound { grid_end: f64 },

    #[error("cannot bracket target {target}: f(start) = {at_start} already exceeds it")]
    BracketFailure { target: f64, at_start: f64 },

    #[error("root finder did not converge after {iterations} iterations (target {target})")]
    NonConvergence { target: f64, iterations: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("index {n} is below the start index {start}")]
    Index { n: u64, start: u64 },

    #[error("correlation {rho} is not positive semidefinite for block length {len} (needs rho >= {min})")]
    NotPsd { rho: f64, len: usize, min: f64 },

    #[error("malformed monotone pair: {0}")]
    MalformedPair(String),

    #[error("weight row {n} violates sum a_ni^2 <= C n: {sum} > {bound}")]
    WeightViolation { n: u64, sum: f64, bound: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
