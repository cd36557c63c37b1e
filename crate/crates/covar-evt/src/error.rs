use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A model or routine was constructed with parameters outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input violates a precondition (lengths, ranges, positivity).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its target accuracy.
    #[error("numeric error: {message} (achieved tolerance {achieved:e})")]
    Numeric { message: String, achieved: f64 },

    /// The adjustment-factor equation has no solution at the requested level,
    /// typically because dependence is too close to tail independence.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// The two-level adjustment-factor solve produced a scaled argument
    /// above one, outside the range covered by the estimator's derivation.
    #[error("adjustment factor bracket exceeded: eta*·p2/p1 = {scaled_arg}")]
    BracketExceeded { scaled_arg: f64 },

    /// An optimizer exhausted its restart budget without converging.
    /// Carries the best point found so that callers can inspect it.
    #[error("optimizer failed to converge: {message} (best objective {best_objective})")]
    NonConvergence {
        message: String,
        best_point: Vec<f64>,
        best_objective: f64,
    },

    /// Degenerate input (e.g. a constant series) for which the requested
    /// statistic is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
