use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state not in the occupancy state space: {0}")]
    InvalidState(String),
    #[error("invalid Lyapunov index combination: {0}")]
    InvalidIndex(String),
    #[error("no convergence in {what} after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("state space has {size} states, limit is {limit}")]
    StateSpaceTooLarge { size: u128, limit: usize },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// True for numeric failures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::StepUnderflow { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
