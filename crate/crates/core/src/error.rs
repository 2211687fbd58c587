//! Error type shared by every module of the simulator.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or construction arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix or vector shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value became NaN or infinite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke a precondition (bad layer index, mismatched cache, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Dataset header does not fit the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Dataset content is unusable (empty file, no rows, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A specific CSV row failed to parse.
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    /// A training round aborted for a specific user.
    #[error("round error for user {user}: {message}")]
    Round { user: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            },
            _ => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Row {
                    line,
                    message: e.to_string(),
                }
            }
        }
    }
}
