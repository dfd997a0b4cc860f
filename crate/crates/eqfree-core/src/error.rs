//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by integration, lifting and the coarse solvers.
#[derive(Debug, Clone, Error)]
pub enum EqFreeError {
    /// The microscopic integration produced a non-finite state.
    #[error("integration blew up at t = {time}")]
    Blowup { time: f64 },

    /// A macroscopic value was outside the domain of the lifting operator.
    #[error("lifting domain violation: {0}")]
    LiftingDomain(String),

    /// Newton iteration exhausted its iteration budget.
    #[error("Newton did not converge within {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { residual: f64, iterations: usize },

    /// The finite-difference Jacobian (or the matrix B of the generalized
    /// eigenproblem) was numerically singular.
    #[error("singular matrix{}", match .column { Some(c) => format!(" (column {c})"), None => String::new() })]
    SingularMatrix { column: Option<usize> },

    /// A kernel-weighted observable lost all its weight (e.g. the whole crowd
    /// drifted far from the door).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A required parameter was missing or invalid.
    #[error("parameter error: {0}")]
    Parameter(String),
}

impl EqFreeError {
    /// True for errors that a continuation corrector may recover from by
    /// halving its step (as opposed to programming errors).
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            EqFreeError::Blowup { .. }
                | EqFreeError::LiftingDomain(_)
                | EqFreeError::NewtonDiverged { .. }
                | EqFreeError::SingularMatrix { .. }
        )
    }
}
