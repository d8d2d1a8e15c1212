use alloc::string::String;

/// Errors raised by the core operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Vector or matrix shapes do not agree.
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch {
        /// Expected length.
        expected: usize,
        /// Supplied length.
        found: usize,
    },
    /// A similarity was given an invalid ratio, a non-orthogonal linear part,
    /// or the system was otherwise malformed.
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    /// The directed graph of a graph-directed system is not strongly connected
    /// or has a vertex without outgoing edges.
    #[error("graph structure: {0}")]
    Structure(String),
    /// A symbol word is not a path in the system's graph.
    #[error("word is not composable at position {position}")]
    Path {
        /// Index of the first letter that does not continue the path.
        position: usize,
    },
    /// An enumeration would exceed the configured point budget.
    #[error("point budget {budget} exceeded; smallest feasible resolution is about {feasible_delta:.3e}")]
    Budget {
        /// The configured budget.
        budget: usize,
        /// A resolution at which the enumeration fits within the budget.
        feasible_delta: f64,
    },
    /// An operation precondition is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Not enough data for a regression or estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// The operation is not defined for this kind of system.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// An internal consistency check between two computation routes failed.
    #[error("consistency check failed: {0}")]
    Consistency(String),
}

/// Result alias for core operations.
pub type Result<T> = core::result::Result<T, Error>;
