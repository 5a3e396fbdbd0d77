//! Experiment pipeline around the `anoseqs` core: artifact layout, resumable
//! stages, sweeps, reports and plots.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{Algo, RunConfig};
pub use error::{HarnessError, Result};
pub use pipeline::{Evaluation, Pipeline, PolicyRun, SweepParam, SweepPoint};
