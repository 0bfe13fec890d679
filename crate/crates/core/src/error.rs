//! Error taxonomy shared by every module.
//!
//! Four failure classes cover the crate: malformed input (`Validation`),
//! incompatible tensor geometry (`Shape`), numerical breakdown such as a
//! factorisation that did not converge or a residual above tolerance
//! (`Numerical`), and guard rails on problem size (`Resource`). I/O and JSON
//! errors pass through so callers can surface the underlying cause.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad norm, bad dimension,
    /// out-of-range parameter, malformed file contents).
    #[error("validation: {0}")]
    Validation(String),

    /// Tensor operands have incompatible extents. The message names both
    /// operands and their shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical routine failed: non-convergence, NaN/Inf in a result, or
    /// a verification residual above its tolerance.
    #[error("numerical: {0}")]
    Numerical(String),

    /// The request exceeds a size guard (e.g. dense statevector for n > 24)
    /// or an explicit bond-dimension cap.
    #[error("resource: {0}")]
    Resource(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for CLI use: validation-type failures exit 2,
    /// numerical failures exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Shape(_) | Error::Resource(_) => 2,
            Error::Numerical(_) => 3,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}
