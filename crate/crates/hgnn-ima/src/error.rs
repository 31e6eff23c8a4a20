//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed row in a dataset file. `line` is 1-based.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// A structural violation in graph, schema, feature, or split data.
    #[error("invalid data: {0}")]
    Data(String),

    /// Bad configuration (unknown keys, out-of-range values, flag conflicts).
    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    Shape {
        expected: String,
        got: String,
        context: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}: loss is not finite")]
    Diverged { iteration: usize },

    /// Checkpoint / dataset schema disagreement.
    #[error("schema hash mismatch: checkpoint was trained on a different schema ({expected} != {got})")]
    SchemaMismatch { expected: String, got: String },
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: msg.into(),
        }
    }

    /// Short machine-readable code, used by the CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO",
            Error::Parse { .. } => "PARSE",
            Error::Data(_) => "DATA",
            Error::Config(_) => "CONFIG",
            Error::Shape { .. } => "SHAPE",
            Error::NonFinite(_) => "NONFINITE",
            Error::Diverged { .. } => "DIVERGED",
            Error::SchemaMismatch { .. } => "SCHEMA",
        }
    }
}
