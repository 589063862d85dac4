use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} = {value} outside the valid domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("root refinement for mode {mode} did not converge (residual {residual:e})")]
    RootSolver { mode: usize, residual: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("voltage {value} V on patch {patch} exceeds limit {limit} V")]
    Saturation { patch: usize, value: f64, limit: f64 },

    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("QP did not converge in {iterations} sweeps (KKT residual {residual:e})")]
    QpNonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("candidate infeasible at index {index}: {value} not in [{lower}, {upper}]")]
    Infeasible {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDivergence { epoch: usize },

    #[error("controller needs {needed} samples of history, has {available}")]
    WarmUp { needed: usize, available: usize },

    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
