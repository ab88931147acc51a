use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] abscreen_core::Error),

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{failed} record(s) failed every attempt and were left pending")]
    PartialBatch { failed: usize },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::File { .. } | CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Usage(_) => "usage",
            CliError::Conflict(_) => "conflict",
            CliError::PartialBatch { .. } => "partial_batch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(abscreen_core::Error::Locked(_)) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_text(path: &std::path::Path) -> CliResult<String> {
    let bytes = read_file(path)?;
    String::from_utf8(bytes).map_err(|e| abscreen_core::Error::Encoding(format!("{}: {e}", path.display())).into())
}
