use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ToolkitError {
    #[error(transparent)]
    Core(#[from] bss_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error at row {row}, column {column}: {message}")]
    Schema { row: usize, column: usize, message: String },
    #[error("non-uniform grid at row {row}: spacing {spacing} vs {expected}")]
    NonUniformGrid { row: usize, spacing: f64, expected: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ToolkitError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ToolkitError::Io { path: path.to_path_buf(), source }
    }

    pub fn schema(row: usize, column: usize, message: impl Into<String>) -> Self {
        ToolkitError::Schema { row, column, message: message.into() }
    }
}

pub type ToolkitResult<T> = Result<T, ToolkitError>;
