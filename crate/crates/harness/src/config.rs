//! Run configuration: a TOML file whose every key has a default, plus
//! command-line overrides of the form `section.key=value`.

use std::path::{Path, PathBuf};

use anoseqs::agent::{AgentConfig, TrainConfig};
use anoseqs::detector::{CalibrationMethod, DetectorConfig, ScoreMode};
use anoseqs::envs::{EnvConfig, EnvId, Role};
use anoseqs::sequences::WindowParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const OUT_ENV_VAR: &str = "ANOSEQS_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Anoseqs,
    Td3Baseline,
    CostShapingBaseline,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Td3Baseline, Algo::Anoseqs, Algo::CostShapingBaseline];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::Anoseqs => "anoseqs",
            Algo::Td3Baseline => "td3_baseline",
            Algo::CostShapingBaseline => "cost_shaping_baseline",
        }
    }

    /// Column label used in reports and plot legends.
    pub fn label(&self) -> &'static str {
        match self {
            Algo::Anoseqs => "AnoSeqs",
            Algo::Td3Baseline => "TD3",
            Algo::CostShapingBaseline => "Cost shaping",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algo {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub env: EnvId,
    pub layout_seed: u64,
    pub max_steps: Option<usize>,
    /// Environment steps of source-agent training.
    pub total_steps: u64,
    pub seed: u64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            env: EnvId::HazardPointGoal,
            layout_seed: 100,
            max_steps: None,
            total_steps: 20_000,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub env: EnvId,
    pub layout_seed: u64,
    pub max_steps: Option<usize>,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            env: EnvId::HazardPointGoal,
            layout_seed: 1,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            total_steps: t.total_steps,
            eval_interval: t.eval_interval,
            eval_episodes: t.eval_episodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    pub window_len: usize,
    pub stride: usize,
    /// Defaults to `window_len`.
    pub horizon: Option<usize>,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for WindowsSection {
    fn default() -> Self {
        Self {
            window_len: 16,
            stride: 1,
            horizon: None,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl WindowsSection {
    pub fn params(&self) -> WindowParams {
        WindowParams {
            window_len: self.window_len,
            stride: self.stride,
            horizon: self.horizon.unwrap_or(self.window_len),
            holdout_fraction: self.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Percentile,
    MeanPlusKSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub method: MethodKind,
    /// Percent for `percentile`, `k` for `mean_plus_k_sigma`.
    pub parameter: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            method: MethodKind::Percentile,
            parameter: 95.0,
        }
    }
}

impl CalibrationSection {
    pub fn method(&self) -> CalibrationMethod {
        match self.method {
            MethodKind::Percentile => CalibrationMethod::Percentile(self.parameter),
            MethodKind::MeanPlusKSigma => CalibrationMethod::MeanPlusKSigma(self.parameter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingSection {
    /// Fixed threshold; the calibrated one is used when absent.
    pub theta: Option<f64>,
    pub beta: f64,
    pub score_mode: ScoreMode,
    /// Penalty of the cost-shaping baseline; defaults to `beta`.
    pub cost_beta: Option<f64>,
}

impl Default for ShapingSection {
    fn default() -> Self {
        Self {
            theta: None,
            beta: 10.0,
            score_mode: ScoreMode::Mae,
            cost_beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub episodes: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algo>,
    pub source: SourceSection,
    pub target: TargetSection,
    pub agent: AgentConfig,
    pub training: TrainingSection,
    pub windows: WindowsSection,
    pub detector: DetectorConfig,
    pub calibration: CalibrationSection,
    pub shaping: ShapingSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "default".into(),
            out_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2, 3, 4],
            algorithms: vec![Algo::Td3Baseline, Algo::Anoseqs],
            source: SourceSection::default(),
            target: TargetSection::default(),
            agent: AgentConfig::default(),
            training: TrainingSection::default(),
            windows: WindowsSection::default(),
            detector: DetectorConfig::default(),
            calibration: CalibrationSection::default(),
            shaping: ShapingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to a bare string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        for ov in overrides {
            let (path, raw) = ov
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override {ov:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            let keys: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = keys.split_last().expect("split yields one item");
            let mut table = &mut doc;
            for k in parents {
                table = table
                    .entry(k.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| HarnessError::Config(format!("{k} is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&doc).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad(format!("run_id {:?} is not a plain name", self.run_id));
        }
        self.agent.validate()?;
        self.detector.validate()?;
        if self.training.total_steps < self.agent.warmup_steps
            || self.source.total_steps < self.agent.warmup_steps
        {
            return bad("total_steps must be at least agent.warmup_steps".into());
        }
        let w = self.windows.params();
        if w.window_len < 2 || w.stride < 1 || !(0.0..1.0).contains(&w.holdout_fraction) {
            return bad("windows: window_len >= 2, stride >= 1, holdout_fraction in [0, 1)".into());
        }
        if !(self.shaping.beta >= 0.0) || self.shaping.cost_beta.is_some_and(|b| !(b >= 0.0)) {
            return bad("shaping: penalties must be non-negative".into());
        }
        if self.shaping.theta.is_some_and(|t| !t.is_finite()) {
            return bad("shaping.theta must be finite".into());
        }
        Ok(())
    }

    /// Output root: `ANOSEQS_OUT` when set, else `out_dir`.
    pub fn out_root(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV_VAR) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.clone(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_root().join(&self.run_id)
    }

    pub fn source_env(&self) -> EnvConfig {
        EnvConfig {
            max_steps: self.source.max_steps,
            ..EnvConfig::new(self.source.env, Role::Source, self.source.layout_seed)
        }
    }

    pub fn target_env(&self) -> EnvConfig {
        EnvConfig {
            max_steps: self.target.max_steps,
            ..EnvConfig::new(self.target.env, Role::Target, self.target.layout_seed)
        }
    }

    pub fn cost_beta(&self) -> f64 {
        self.shaping.cost_beta.unwrap_or(self.shaping.beta)
    }

    /// Hash of the whole configuration except its output location.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
        }
        hash_json(&v)
    }
}

/// SHA-256 over canonical JSON (object keys sorted).
pub fn hash_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(value).expect("json").as_bytes()))
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {raw}")) {
        Ok(p) => p.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::default()
            .with_overrides(&[
                "shaping.beta=25".into(),
                "seeds=[7]".into(),
                "target.env=corridor_run".into(),
                "shaping.theta=0.002".into(),
                "run_id=abc".into(),
            ])
            .unwrap();
        assert_eq!(cfg.shaping.beta, 25.0);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.target.env, EnvId::CorridorRun);
        assert_eq!(cfg.shaping.theta, Some(0.002));
        assert_eq!(cfg.run_id, "abc");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[shaping]\nbeeta = 3").is_err());
        assert!(RunConfig::default().with_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = a.with_overrides(&["shaping.beta=1".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let empty = RunConfig {
            seeds: vec![],
            ..RunConfig::default()
        };
        assert!(empty.validate().is_err());
    }
}
