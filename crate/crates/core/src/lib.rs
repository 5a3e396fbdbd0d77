//! Safe-RL pipeline: collect trajectories in a source environment, learn a
//! sequential anomaly detector on safe state windows, then train TD3 in a
//! target environment with an anomaly-penalized reward.

pub mod agent;
pub mod detector;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod seeding;
pub mod sequences;
pub mod shaping;

pub use error::{Error, Result};
