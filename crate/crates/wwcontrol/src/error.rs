//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented precondition (wrong mode, non-zero mean, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector or sample buffer has the wrong length.
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    /// A state or coefficient is too large for the fixed-point constructions.
    #[error("smallness bound violated: {what} = {value:.3e} exceeds {bound:.3e}")]
    Smallness {
        what: &'static str,
        value: f64,
        bound: f64,
    },

    /// A fixed-point map or Neumann series failed to contract.
    #[error("contraction failure in {what}: measured factor {factor:.3e}")]
    Contraction { what: &'static str, factor: f64 },

    /// An iteration did not converge within its budget.
    #[error("no convergence in {what} after {iterations} iterations (last change {last:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    /// The observation Gramian is numerically singular.
    #[error("non-observable: smallest Gramian eigenvalue {lambda_min:.3e}")]
    NonObservable { lambda_min: f64 },

    /// A matrix that must be inverted is singular or badly conditioned.
    #[error("ill-conditioned {what}: condition estimate {cond:.3e}")]
    IllConditioned { what: &'static str, cond: f64 },

    /// Norms grew past the blow-up guard during a nonlinear solve.
    #[error("blow-up at t = {t:.4}: norm {norm:.3e} exceeds {limit:.3e}")]
    BlowUp { t: f64, norm: f64, limit: f64 },

    /// Support margins for the localized cutoffs cannot be met.
    #[error("support margin violated: warp {warp:.3e} exceeds available margin {margin:.3e}")]
    Margin { warp: f64, margin: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
