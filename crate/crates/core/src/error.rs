use thiserror::Error;

use crate::params::ValidationReport;

/// Errors raised by the model, simulators and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("volatility matrix is singular or ill-conditioned (condition number {condition:e})")]
    SigmaSingular { condition: f64 },

    #[error("parameter validation failed: {0}")]
    Validation(ValidationReport),

    #[error("degenerate labor-income discount: beta - beta_inf = {gap:e} <= 0")]
    DegenerateDiscount { gap: f64 },

    #[error("grid mismatch: expected {expected} nodes, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("time step {dt} does not divide the history grid step {ds}")]
    StepIncompatible { dt: f64, ds: f64 },

    #[error("state is inadmissible: total wealth {gamma} is below -{tol:e}")]
    InadmissibleState { gamma: f64, tol: f64 },

    #[error("negative control: {name} = {value}")]
    NegativeControl { name: &'static str, value: f64 },

    #[error("utility sentinel -inf encountered on path {path}")]
    SentinelEncountered { path: usize },

    #[error("dimension mismatch: {what} has length {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
