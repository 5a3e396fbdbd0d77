//! Fixed-length state windows cut from trajectory logs, filtered to those
//! that neither contain nor closely precede an unsafe event.
//!
//! Within an episode, index `k` refers to the state reached by the `k`-th
//! step (the log record's `next_state`) and to that step's cost/failure.
//! This is the same sequence the streaming scorer sees during training.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use netcore::Matrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::agent::TrajectoryRecord;
use crate::envs::{EnvId, StateVec};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub struct StateWindow {
    /// `T x M`, one row per consecutive step.
    pub states: Matrix,
    pub episode: u64,
    pub start: usize,
}

impl StateWindow {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    /// Last step index covered by the window.
    pub fn end(&self) -> usize {
        self.start + self.len() - 1
    }
}

/// Windows starting at `0, stride, 2*stride, ...` that fit entirely inside
/// the episode. Short episodes yield nothing.
pub fn extract_windows(
    episode: &[StateVec],
    window_len: usize,
    stride: usize,
    episode_id: u64,
) -> Vec<StateWindow> {
    assert!(window_len >= 2, "window length must be at least 2");
    assert!(stride >= 1, "stride must be at least 1");
    if episode.len() < window_len {
        return Vec::new();
    }
    (0..=episode.len() - window_len)
        .step_by(stride)
        .map(|start| StateWindow {
            states: Matrix::from_rows(&episode[start..start + window_len]),
            episode: episode_id,
            start,
        })
        .collect()
}

/// Keeps window `[i, i + T - 1]` iff no event lies in `[i, i + T - 1 + horizon]`.
pub fn filter_safe(windows: Vec<StateWindow>, events: &[usize], horizon: usize) -> Vec<StateWindow> {
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    windows
        .into_iter()
        .filter(|w| {
            let (lo, hi) = (w.start, w.end() + horizon);
            // first event >= lo
            let idx = sorted.partition_point(|&e| e < lo);
            sorted.get(idx).is_none_or(|&e| e > hi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Holdout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub window_len: usize,
    pub state_dim: usize,
    pub env_id: EnvId,
    pub provenance: String,
    pub train: Vec<StateWindow>,
    pub holdout: Vec<StateWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_len: usize,
    pub stride: usize,
    /// Lookahead exclusion horizon; defaults to the window length.
    pub horizon: usize,
    pub holdout_fraction: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_len: 16,
            stride: 1,
            horizon: 16,
            holdout_fraction: 0.2,
        }
    }
}

/// Per-episode next-state sequences and unsafe-event indices from a log.
pub fn split_episodes(log: &[TrajectoryRecord]) -> BTreeMap<u64, (Vec<StateVec>, Vec<usize>)> {
    let mut episodes: BTreeMap<u64, (Vec<StateVec>, Vec<usize>)> = BTreeMap::new();
    for r in log {
        let e = episodes.entry(r.episode).or_default();
        if r.cost > 0 || r.failure {
            e.1.push(e.0.len());
        }
        e.0.push(StateVec(r.next_state.clone()));
    }
    episodes
}

/// Cuts, filters, shuffles and splits the safe windows of a trajectory log.
pub fn build_dataset(
    log: &[TrajectoryRecord],
    env_id: EnvId,
    params: &WindowParams,
    provenance: &str,
    seed: u64,
) -> Result<WindowDataset> {
    if log.is_empty() {
        return Err(Error::Config("trajectory log is empty".into()));
    }
    if !(0.0..1.0).contains(&params.holdout_fraction) {
        return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
    }
    if params.window_len < 2 || params.stride < 1 {
        return Err(Error::Config("window_len >= 2 and stride >= 1 required".into()));
    }
    let state_dim = log[0].next_state.len();
    if let Some(r) = log.iter().find(|r| r.next_state.len() != state_dim) {
        return Err(Error::StateDim {
            expected: state_dim,
            actual: r.next_state.len(),
        });
    }

    let mut safe = Vec::new();
    for (id, (states, events)) in split_episodes(log) {
        let windows = extract_windows(&states, params.window_len, params.stride, id);
        safe.extend(filter_safe(windows, &events, params.horizon));
    }
    if safe.is_empty() {
        return Err(Error::NoSafeWindows(format!(
            "{} log records, window length {}",
            log.len(),
            params.window_len
        )));
    }
    safe.shuffle(&mut seeding::rng(seed, 0xda7a));
    let holdout_n = (params.holdout_fraction * safe.len() as f64).floor() as usize;
    let train = safe.split_off(holdout_n);
    Ok(WindowDataset {
        window_len: params.window_len,
        state_dim,
        env_id,
        provenance: provenance.to_string(),
        train,
        holdout: safe,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    provenance: String,
    train_count: usize,
    holdout_count: usize,
    /// `(episode, start)` per window, in file order.
    origins: Vec<(u64, usize)>,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.holdout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn windows(&self, split: Split) -> &[StateWindow] {
        match split {
            Split::Train => &self.train,
            Split::Holdout => &self.holdout,
        }
    }

    /// Binary body: header line `T=<int> M=<int> count=<int> env=<id>` then
    /// `count * T * M` little-endian `f32` values, train windows first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "T={} M={} count={} env={}\n",
            self.window_len,
            self.state_dim,
            self.len(),
            self.env_id
        )
        .into_bytes();
        for w in self.train.iter().chain(&self.holdout) {
            for &v in w.states.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    fn meta_json(&self) -> String {
        let meta = DatasetMeta {
            provenance: self.provenance.clone(),
            train_count: self.train.len(),
            holdout_count: self.holdout.len(),
            origins: self
                .train
                .iter()
                .chain(&self.holdout)
                .map(|w| (w.episode, w.start))
                .collect(),
        };
        serde_json::to_string(&meta).expect("meta serializes")
    }

    /// Parses the binary body. `meta`, the sidecar JSON, restores the split
    /// and window origins; without it every window is a training window.
    pub fn from_bytes(bytes: &[u8], meta: Option<&str>) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "dataset",
            detail,
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| bad(e.to_string()))?;
        let mut fields = BTreeMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("header token {tok:?}")))?;
            fields.insert(k, v);
        }
        let num = |k: &str| -> Result<usize> {
            fields
                .get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(format!("{k} is not an integer")))
        };
        let (t, m, count) = (num("T")?, num("M")?, num("count")?);
        let env_id: EnvId = fields
            .get("env")
            .ok_or_else(|| bad("missing env".into()))?
            .parse()?;
        let body = &bytes[nl + 1..];
        if body.len() != count * t * m * 4 {
            return Err(bad(format!(
                "body has {} bytes, expected {}",
                body.len(),
                count * t * m * 4
            )));
        }
        let meta: Option<DatasetMeta> = meta.map(serde_json::from_str).transpose()?;
        if let Some(meta) = &meta {
            if meta.train_count + meta.holdout_count != count || meta.origins.len() != count {
                return Err(bad("sidecar counts disagree with header".into()));
            }
        }
        let mut windows: Vec<StateWindow> = body
            .chunks_exact(t * m * 4)
            .enumerate()
            .map(|(i, chunk)| {
                let data = chunk
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                let (episode, start) = meta.as_ref().map_or((0, i), |m| m.origins[i]);
                StateWindow {
                    states: Matrix::from_vec(t, m, data),
                    episode,
                    start,
                }
            })
            .collect();
        let train_count = meta.as_ref().map_or(count, |m| m.train_count);
        let holdout = windows.split_off(train_count);
        Ok(WindowDataset {
            window_len: t,
            state_dim: m,
            env_id,
            provenance: meta.map(|m| m.provenance).unwrap_or_default(),
            train: windows,
            holdout,
        })
    }

    /// Writes `path` and its sidecar `path.meta.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        fs::write(meta_path(path), self.meta_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let meta = fs::read_to_string(meta_path(path)).ok();
        Self::from_bytes(&bytes, meta.as_deref())
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}
