use std::fmt;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimensions of the inputs do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A parameter lies outside its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A numerical routine failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The input is degenerate for the requested operation, e.g. the
    /// initializer is orthogonal to the range of the operator.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A matrix required to be positive semidefinite is not.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// Malformed serialized data (EMX1, CSV, JSON).
    #[error("format error: {0}")]
    Format(String),

    /// Invalid experiment or generator configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl fmt::Display) -> Self {
        Error::Shape(msg.to_string())
    }

    pub(crate) fn param(msg: impl fmt::Display) -> Self {
        Error::Parameter(msg.to_string())
    }

    pub(crate) fn numerical(msg: impl fmt::Display) -> Self {
        Error::Numerical(msg.to_string())
    }

    /// True for errors caused by the caller's input or configuration rather
    /// than by a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::Parameter(_) | Error::Format(_) | Error::Config(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
