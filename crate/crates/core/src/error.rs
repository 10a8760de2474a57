use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("set is empty")]
    EmptySet,

    #[error("set is unbounded along a queried direction")]
    Unbounded,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("system is not controllable: {0}")]
    NotControllable(String),

    #[error("polytope is not in origin-interior normal form (row {row} has rhs {rhs})")]
    NormalForm { row: usize, rhs: f64 },

    #[error("dimension {dim} exceeds vertex-enumeration limit {limit}; use bounding-box mode")]
    DimensionLimit { dim: usize, limit: usize },

    #[error("Fourier-Motzkin row count {rows} exceeds cap {cap}")]
    RowLimit { rows: usize, cap: usize },

    #[error("projection budget exceeded: dimension {dim} > {budget}")]
    BudgetExceeded { dim: usize, budget: usize },

    #[error("containment violated: {0}")]
    ContainmentViolation(String),

    #[error("set is not robust controlled invariant; violating point {point:?}")]
    NotInvariant { point: Vec<f64> },

    #[error("assumption cannot be verified: {0}")]
    AssumptionUnverifiable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("computation cancelled")]
    Cancelled,
}

pub type Result<T> = std::result::Result<T, Error>;
