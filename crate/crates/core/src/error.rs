use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),

    #[error("no records found in {0} input")]
    EmptyInput(&'static str),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot derive a deduplication key: pmid, doi and title are all empty")]
    KeyDerivation,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown {kind}: {id}")]
    NotFound { kind: &'static str, id: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("project directory {0} already exists and is not empty")]
    ProjectExists(PathBuf),

    #[error("project {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("project was opened read-only")]
    ReadOnly,

    #[error("corrupt table {table}: {message}")]
    Corrupt { table: String, message: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("cold start: at least one relevant and one irrelevant labeled record are required")]
    ColdStart,

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("batch interrupted before completion")]
    Interrupted,

    #[error("keystore error: {0}")]
    Keystore(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn not_found(kind: &'static str, id: impl ToString) -> Self {
        Error::NotFound {
            kind,
            id: id.to_string(),
        }
    }

    /// Stable machine-readable code, used by the HTTP service and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Encoding(_) => "encoding",
            Error::EmptyInput(_) => "empty_input",
            Error::Schema(_) => "schema",
            Error::Parse(_) => "parse",
            Error::KeyDerivation => "key_derivation",
            Error::Validation(_) => "validation",
            Error::NotFound { .. } => "not_found",
            Error::Parameter(_) => "parameter",
            Error::ProjectExists(_) => "project_exists",
            Error::Locked(_) => "locked",
            Error::ReadOnly => "read_only",
            Error::Corrupt { .. } => "corrupt",
            Error::Training(_) => "training",
            Error::ColdStart => "cold_start",
            Error::Undefined(_) => "undefined",
            Error::Provider(_) => "provider",
            Error::Interrupted => "interrupted",
            Error::Keystore(_) => "keystore",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
