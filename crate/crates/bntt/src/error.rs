use std::path::PathBuf;

/// Failures of file IO, parsing and the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed binary input (dataset files, checkpoints).
    #[error("{what}: {reason}")]
    Format { what: String, reason: String },
    /// Configuration text that cannot be accepted; `line` is one-based.
    #[error("{origin}:{line}: {reason}")]
    Config {
        origin: String,
        line: usize,
        reason: String,
    },
    /// Loaded data that does not fit the requested network or settings.
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Engine(#[from] bntt_core::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        DataError::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
