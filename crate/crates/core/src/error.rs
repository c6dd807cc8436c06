use thiserror::Error;

/// Errors raised by the simulator's validation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stream too short: need at least {needed} samples, got {got}")]
    StreamTooShort { needed: usize, got: usize },

    #[error("routing conflict: {0}")]
    Routing(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("failed to read measured response: {0}")]
    MeasuredResponse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, range: impl Into<String>) -> Self {
        Error::OutOfRange {
            name,
            value,
            range: range.into(),
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
