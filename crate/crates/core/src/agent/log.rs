use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of a trajectory log (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub episode: u64,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward_orig: f64,
    pub reward_used: f64,
    pub cost: u8,
    pub terminated: bool,
    pub failure: bool,
    pub truncated: bool,
    /// State after the step. Not part of the minimal record; kept so that
    /// windows can be cut from the log without replaying the environment.
    pub next_state: Vec<f64>,
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
