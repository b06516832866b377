use std::path::PathBuf;

use copr_core::CoprError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] CoprError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a path to a core error raised while reading that file.
    pub fn reading(path: impl Into<PathBuf>, err: CoprError) -> Self {
        let path = path.into();
        match err {
            CoprError::Io(source) => Self::Io { path, source },
            other => Self::Input {
                path,
                message: other.to_string(),
            },
        }
    }

    /// 1 for I/O and malformed input, 2 for usage, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Input { .. } => 1,
            Self::Usage(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
