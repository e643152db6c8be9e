use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residuals of the optimal-control equality constraints for the closest
/// candidate found before the search was declared infeasible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// Terminal glucose `s_G(tf)` (g/l) of the least-violating candidate.
    pub depletion_residual: f64,
    /// Batch-yield deviation `Y_LG - target` (g/g) of that candidate.
    pub yield_residual: f64,
    pub detail: String,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (best depletion residual {:.4} g/l, best yield residual {:+.4} g/g)",
            self.detail, self.depletion_residual, self.yield_residual
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An input value violates the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Measured data or a serialized artifact is malformed.
    #[error("data error: {0}")]
    Data(String),

    /// A configuration value is inconsistent or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical procedure failed (factorization, optimization).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The ODE integrator produced a non-finite state.
    #[error("integration failed at t = {time} h: {detail}")]
    Integration { time: f64, detail: String },

    /// No candidate satisfied the optimal-control constraints.
    #[error("infeasible: {0}")]
    Infeasible(Box<InfeasibilityReport>),
}

pub type Result<T> = std::result::Result<T, Error>;
