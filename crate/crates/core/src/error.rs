use thiserror::Error;

/// Errors raised by the library.
///
/// The variants line up with the exit codes of the command-line front end,
/// so every failure can be reported as a single `error[kind]: message` line.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("{0}")]
    Domain(String),
    /// A requested computation exceeds a configured size or work budget.
    #[error("{0}")]
    Size(String),
    /// A numerical routine could not reach the requested accuracy.
    #[error("{0}")]
    Accuracy(String),
    /// A covariance model or matrix is not admissible.
    #[error("{0}")]
    Model(String),
    /// Malformed textual input (model grammar, CSV tables).
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in `error[kind]:` prefixes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Size(_) => "size",
            Error::Accuracy(_) => "accuracy",
            Error::Model(_) => "model",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
