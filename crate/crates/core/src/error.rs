use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in matrix")]
    NonFinite,

    #[error("row {row} has an empty support")]
    EmptySupport { row: usize },

    #[error("unstable: growth factor {rho} is not below one")]
    Unstable { rho: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("graph too large for exhaustive search (N = {n}, limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("order is not a cycle of the graph: {0}")]
    NotACycle(String),

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("instability {a} is not below the capacity {capacity}")]
    CapacityExceeded { a: f64, capacity: f64 },

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("model does not satisfy the lemma preconditions: {0}")]
    ModelMismatch(String),

    #[error("local design not applicable: {0}")]
    NotApplicable(String),

    #[error("no feasible starting point")]
    NoFeasibleStart,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
