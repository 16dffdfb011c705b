use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// An oracle or model broke a numeric contract (probability outside [0,1],
    /// weights not summing to one, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("model file schema: {0}")]
    Schema(String),

    #[error("frequency of an empty dataset is undefined")]
    EmptyDataset,

    #[error("refusing to enumerate {candidates} itemsets (limit {limit})")]
    EnumerationLimit { candidates: u128, limit: u128 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::EnumerationLimit { .. } => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Version { .. } | Error::Schema(_) => 3,
            Error::Contract(_) | Error::EmptyDataset => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
