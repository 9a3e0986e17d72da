use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall in two families: invalid input (bad matrices, infeasible
/// budgets, mismatched dimensions) and numerical failure (non-convergence,
/// enumeration caps). The CLI maps them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid probability vector ({context}): {reason}")]
    InvalidDistribution { context: String, reason: String },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid cost specification: {0}")]
    InvalidCost(String),

    #[error("infeasible budget: gamma {gamma} is below the minimum letter cost {gamma_zero}")]
    Infeasible { gamma: f64, gamma_zero: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("output distribution does not dominate W(.|{input}) at output {output}")]
    Domination { input: usize, output: usize },

    #[error("input {0} is not admissible for the canonical equation: {1}")]
    NotAdmissible(String, String),

    #[error("mixed channel is not well-ordered ({violations} violation(s)); use the lower-bound route instead")]
    NotWellOrdered { violations: usize },

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("enumeration cap exceeded: {needed} items needed, cap is {cap}; {hint}")]
    CapExceeded { needed: u128, cap: u128, hint: String },
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::CapExceeded { .. } | Error::NotWellOrdered { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
