use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The object cannot perform the requested operation (e.g. sampling a quadrature-only measure).
    #[error("capability error: {0}")]
    Capability(String),
    /// Caller broke an interface contract (length mismatch, non-checkpoint time, ...).
    #[error("contract error: {0}")]
    Contract(String),
    #[error("solver error: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },
    /// A computed object left the range the theory guarantees.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Exit code convention used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Capability(_) | Error::Config(_) | Error::Contract(_) => 2,
            Error::Solver { .. } | Error::Invariant(_) => 1,
            Error::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
