use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by dataset validation, model fitting, clustering and the
/// experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dataset has no observed events; cannot fit a Cox model")]
    DegenerateFit,

    #[error("unknown feature `{0}` not present in the registry")]
    UnknownFeature(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("cannot read {path}: {source}")]
    InputIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// An io failure while writing results (internal, exit code 1).
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// An io failure while reading user-supplied input (exit code 2).
    pub fn input_io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::InputIo {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied input (files, configs,
    /// arguments) as opposed to internal failures. The CLI maps these to
    /// exit code 2.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
