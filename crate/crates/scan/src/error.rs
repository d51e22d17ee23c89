use std::path::{Path, PathBuf};

pub type Result<T, E = ScanError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] horizon_core::Error),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl ScanError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        ScanError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        ScanError::Format { path: path.as_ref().to_path_buf(), line, message: message.into() }
    }

    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        ScanError::Stage { stage, message: err.to_string() }
    }

    /// 2 for bad usage or input, 3 for a failed pipeline stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScanError::Stage { .. } => 3,
            _ => 2,
        }
    }
}

/// Attaches a path to IO errors.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| ScanError::io(path, e))
    }
}
