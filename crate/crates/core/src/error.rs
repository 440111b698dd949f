use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants map onto the CLI exit codes: contract violations exit with 2,
/// format and range errors with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file did not follow the expected layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A stored sample does not fit the declared bit depth.
    #[error("sample {value} at index {index} is outside the {bit_depth}-bit range")]
    Range {
        value: f64,
        index: usize,
        bit_depth: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::Format { .. } | Error::Range { .. } | Error::Json { .. } => 3,
            Error::Io { .. } => 1,
        }
    }
}
