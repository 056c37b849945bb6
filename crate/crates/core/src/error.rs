use crate::solver_em::StabilityViolation;

/// Errors produced by the solver and analysis layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The forward scheme was asked to run outside its admissible region.
    #[error(transparent)]
    Stability(#[from] StabilityViolation),
    /// The request would exceed a configured memory budget.
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    /// Inconsistent sizes, levels or empty inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Underlying I/O failure (lattice dump/load).
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// A lattice file did not match the expected layout.
    #[error("malformed lattice file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
