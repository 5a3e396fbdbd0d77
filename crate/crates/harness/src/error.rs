use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] anoseqs::Error),
    #[error(transparent)]
    Net(#[from] netcore::NetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: recorded config hash {found} does not match current {expected}; use a new run_id or --force")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("missing artifact {0}; run the producing stage first")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
