//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported element: d={d}, p={p}")]
    UnsupportedElement { d: usize, p: usize },

    #[error("point lies outside the reference element")]
    OutsideReference,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Precondition(String),

    #[error("degenerate element {element}: |det| = {det:.3e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("non-finite value while evaluating coefficient on element {element}")]
    NonFinite { element: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (negative curvature at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize },

    #[error("lift failed for {count} point(s); worst residual {worst:.3e}")]
    LiftFailed { count: usize, worst: f64 },

    #[error("memory budget exceeded: operation needs ~{needed_mb} MB, budget is {budget_mb} MB")]
    Resource { needed_mb: usize, budget_mb: usize },
}
