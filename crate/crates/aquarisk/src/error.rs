use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AppError {
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
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: missing mandatory column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error(
        "{path}: {bad} of {total} rows are malformed (first: row {first_row}: {first_message})"
    )]
    TooMalformed {
        path: PathBuf,
        bad: usize,
        total: usize,
        first_row: usize,
        first_message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("missing {what}: {path} not found (run `{producer}` first)")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        producer: &'static str,
    },
    #[error("stale upstream artifact {path}: content hash differs from manifest.json")]
    Stale { path: PathBuf },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] aquarisk_core::Error),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        AppError::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        AppError::Json {
            path: path.into(),
            source,
        }
    }
}
