use std::path::PathBuf;

/// Errors of the harness. Configuration problems map to exit code 2,
/// everything else to exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {message}")]
    ConfigLine { path: String, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Core(#[from] ttalab_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigLine { .. } | HarnessError::Config(_) => 2,
            HarnessError::Core(ttalab_core::Error::Config(_)) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        HarnessError::Csv { path: path.into(), source }
    }
}
