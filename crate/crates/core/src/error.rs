use thiserror::Error;

/// Errors raised by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),

    /// Parse failure with a source location (exit code 2).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data violating a model invariant (exit code 3).
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// The path never carried drift information: sum of f^2 dt is ~0.
    #[error("degenerate path: sum of f(X)^2 dt = {denom:e} is below {threshold:e}")]
    DegeneratePath { denom: f64, threshold: f64 },

    /// Drift function vanishes under the invariant law.
    #[error("degenerate drift: information F = {0:e} is numerically zero")]
    DegenerateDrift(f64),

    /// One-sided stationary density does not decay on [l, inf).
    #[error("stationary density not integrable: {0}")]
    Divergence(String),

    /// Quadrature or other numerical procedure failed (exit code 4).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract: 0 ok, 2 config/parse, 3 invariant, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Invariant(_) => 3,
            Error::DegeneratePath { .. }
            | Error::DegenerateDrift(_)
            | Error::Divergence(_)
            | Error::Numerical(_) => 4,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
