//! Episodic return, episodic cost rate, total cost rate, and mean ± std
//! summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn episodic_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// Cost signals per step of one episode.
pub fn episodic_cost_rate(cost_count: usize, length: usize) -> f64 {
    assert!(length >= 1, "episode length must be positive");
    cost_count as f64 / length as f64
}

/// Cost signals per training step over a whole run.
pub fn total_cost_rate(total_costs: u64, total_steps: u64) -> f64 {
    assert!(total_steps >= 1, "step count must be positive");
    total_costs as f64 / total_steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub return_orig: f64,
    pub cost_count: usize,
    pub length: usize,
    pub success: bool,
    pub failure: bool,
}

impl EpisodeRecord {
    pub fn cost_rate(&self) -> f64 {
        episodic_cost_rate(self.cost_count, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample (n - 1) standard deviation; std is 0 for one value.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "MeanStd of an empty slice");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", format_mean_std(self.mean, self.std))
    }
}

/// Two-decimal `mean ± std` rendering.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub episode_return: MeanStd,
    pub episode_cost: MeanStd,
    pub episode_cost_rate: MeanStd,
    pub episode_length: MeanStd,
}

pub fn summarize(records: &[EpisodeRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::Config("cannot summarize zero episodes".into()));
    }
    let col = |f: &dyn Fn(&EpisodeRecord) -> f64| -> MeanStd {
        MeanStd::of(&records.iter().map(f).collect::<Vec<_>>())
    };
    Ok(MetricsSummary {
        episodes: records.len(),
        episode_return: col(&|r| r.return_orig),
        episode_cost: col(&|r| r.cost_count as f64),
        episode_cost_rate: col(&|r| r.cost_rate()),
        episode_length: col(&|r| r.length as f64),
    })
}

/// One evaluation point of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episodic_return_mean: f64,
    pub episodic_cost_rate_mean: f64,
    pub total_cost_rate: f64,
}

pub const CSV_HEADER: &str = "step,episodic_return_mean,episodic_cost_rate_mean,total_cost_rate";

pub fn write_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        // `{}` on f64 prints the shortest representation that round-trips.
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.step, r.episodic_return_mean, r.episodic_cost_rate_mean, r.total_cost_rate
        );
    }
    out
}

pub fn read_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let bad = |detail: String| Error::Format {
        what: "metrics csv",
        detail,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(format!("line {} has {} fields", i + 2, f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
        rows.push(MetricsRow {
            step: f[0]
                .trim()
                .parse()
                .map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
            episodic_return_mean: num(f[1])?,
            episodic_cost_rate_mean: num(f[2])?,
            total_cost_rate: num(f[3])?,
        });
    }
    Ok(rows)
}
