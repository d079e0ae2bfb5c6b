use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one failure class
/// so front ends can pick an exit status from [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid stack: {0}")]
    InvalidStack(String),

    #[error("unknown class {class} (stack holds {available:?})")]
    UnknownClass { class: usize, available: Vec<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error("class selection failed: {0}")]
    Selection(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Selection(_) => ErrorKind::Config,
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::InvalidInput(_)
            | Error::InvalidStack(_)
            | Error::UnknownClass { .. }
            | Error::Metric(_)
            | Error::Parse { .. }
            | Error::Io { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
