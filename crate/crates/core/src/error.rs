//! Error types shared across the library.

use thiserror::Error;

/// Unified error type for all core operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error while parsing an expression.
    #[error("parse error at offset {position}: {message}")]
    Parse { position: usize, message: String },

    /// Identifier outside the declared variable alphabet.
    #[error("unknown identifier `{name}` at offset {position}")]
    UnknownIdentifier { name: String, position: usize },

    /// Expression evaluation left the numeric domain (pole, sqrt of a
    /// negative, overflow to a non-finite value, ...).
    #[error("evaluation outside domain: {0}")]
    EvalDomain(String),

    /// Two multitime points are not ordered in the product order.
    #[error("points are not comparable in the product order: {0}")]
    NotComparable(String),

    /// Invalid construction of a domain object (box, lattice, grid, ...).
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// An operator handed to a representation builder violates its
    /// preconditions (wrong norm, wrong shape, ...).
    #[error("bad operator: {0}")]
    BadOperator(String),

    /// A Hamiltonian fails the positive-homogeneity probe.
    #[error("not positively homogeneous: at lambda={lambda}, got {got}, expected {expected}")]
    NotHomogeneous { lambda: f64, got: f64, expected: f64 },

    /// The marching scheme cannot guarantee a monotone update.
    #[error("monotonicity violated: {0}")]
    MonotonicityViolated(String),

    /// A plot slice leaves more than two axes free.
    #[error("bad slice: {0}")]
    BadSlice(String),
}

pub type Result<T> = std::result::Result<T, Error>;
