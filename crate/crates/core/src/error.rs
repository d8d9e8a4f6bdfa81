use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Correlation matrix is malformed or not positive semi-definite.
    #[error("matrix error: {0}")]
    Matrix(String),
    /// Invalid design configuration (spending spec, graph, effect model).
    #[error("config error: {0}")]
    Config(String),
    /// Structural invariant broken by the inputs (nesting, monotone information).
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// Observed analysis data inconsistent with earlier data or the design.
    #[error("data error: {0}")]
    Data(String),
    /// Operation requested out of order (e.g. statistics for an unfinalized analysis).
    #[error("sequencing error: {0}")]
    Sequencing(String),
    /// Root finding or search failed.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
