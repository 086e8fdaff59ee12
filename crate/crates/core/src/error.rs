use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpnError {
    #[error("schema error: missing column `{column}`{}", at(.path))]
    Schema { column: String, path: Option<PathBuf> },

    #[error("data error for vehicle {vehicle_id}: {message}")]
    Data { vehicle_id: i64, message: String },

    #[error("parse error{}, line {line}: {message}", at(.path))]
    Parse { path: Option<PathBuf>, line: u64, message: String },

    #[error("unsupported rate: {source_hz} Hz cannot be reduced to {target_hz} Hz by an integer stride")]
    UnsupportedRate { source_hz: f64, target_hz: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("training diverged: non-finite {component} at step {step}")]
    Divergence { component: String, step: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn at(path: &Option<PathBuf>) -> String {
    path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default()
}

impl EpnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EpnError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = EpnError> = std::result::Result<T, E>;
