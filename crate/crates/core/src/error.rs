use thiserror::Error;

/// Errors raised by the chanshape library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters violate a type invariant or are mutually inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The singular spectrum is undefined (all-zero matrix).
    #[error("degenerate spectrum: matrix is identically zero")]
    DegenerateSpectrum,

    /// A ratio metric has a vanishing numerator and denominator.
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    /// Matrix dimensions do not match what the operation requires.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
