//! Transformer autoencoder anomaly detector over state windows, threshold
//! calibration and streaming scoring.

mod calibration;
mod model;
mod scorer;

pub use calibration::{
    calibrate_threshold, nearest_rank, CalibrationMethod, ScoreStats, ThresholdCalibration,
    MIN_CALIBRATION_SCORES,
};
pub use model::{
    calibration_path, score_from_mae, window_mae, DetectorConfig, DetectorModel, Normalizer,
    ScoreMode, TrainingReport,
};
pub use scorer::{AnomalyScorer, StreamingScorer};
