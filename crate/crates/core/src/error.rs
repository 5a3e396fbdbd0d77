use netcore::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("action has {actual} components, environment expects {expected}")]
    ActionDim { expected: usize, actual: usize },
    #[error("step called on a finished episode; call reset first")]
    EpisodeFinished,
    #[error("state width {actual} does not match expected {expected}")]
    StateDim { expected: usize, actual: usize },
    #[error("window is {actual_rows}x{actual_cols}, model expects {rows}x{cols}")]
    WindowShape {
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("calibration needs at least {required} scores, got {actual}")]
    TooFewScores { required: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no safe windows found ({0}); collect a longer source run")]
    NoSafeWindows(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
