//! Error taxonomy for the library.
//!
//! Three failure classes cover every fallible operation:
//! precondition violations ([`Error::InvalidArgument`]), simulator failures
//! carrying the step index at which the state became invalid
//! ([`Error::Simulation`]), and optimiser divergence carrying the iteration
//! index ([`Error::Diverged`]).

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A simulator produced an invalid state; `step` is the recursion step
    /// (or 0 for failures in the input/output transforms).
    #[error("simulation failed at step {step}: {reason}")]
    Simulation { step: usize, reason: String },
    /// Stochastic optimisation produced a non-finite loss or gradient at
    /// iteration `step`.
    #[error("optimisation diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand constructor for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
