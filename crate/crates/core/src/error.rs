use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {value} outside [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate mapping on patch {patch} at {at:?}: {what}")]
    Degenerate {
        patch: usize,
        at: Vec<f64>,
        what: String,
    },

    #[error("interface glue error: {0}")]
    Glue(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-positive curvature {curvature:.3e} at iteration {iteration}; matrix is not SPD (penalty too small?)")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("matrix is singular to working precision (pivot {pivot} in column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
