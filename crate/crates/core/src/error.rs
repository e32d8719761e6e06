use thiserror::Error;

use crate::solve::SolveReport;

/// Errors produced by the tensor-train library and the FEM pipeline built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("size guard exceeded: {size} entries requested, limit is {limit}")]
    Guard { size: usize, limit: usize },

    #[error("singular value encountered: {0}")]
    Singular(String),

    #[error("degenerate element: {0}")]
    DegenerateElement(String),

    #[error("solver did not converge after {sweeps} sweeps (residual {residual:.3e})")]
    Convergence {
        sweeps: usize,
        residual: f64,
        best: Box<SolveReport>,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
