//! The pipeline stages. Every stage is resumable: it is skipped when its
//! directory already holds a manifest with the same configuration hash.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anoseqs::agent::{self, read_jsonl, TrainConfig, TrainOutcome, TrajectoryRecord};
use anoseqs::detector::{
    calibrate_threshold, calibration_path, DetectorModel, StreamingScorer, ThresholdCalibration,
};
use anoseqs::envs::Environment;
use anoseqs::metrics::{self, EpisodeRecord, MetricsRow, MetricsSummary};
use anoseqs::seeding;
use anoseqs::sequences::{self, WindowDataset};
use anoseqs::shaping::{CostPenaltyEnv, ShapedEnv, ShapingConfig};
use netcore::{Checkpoint, Network};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{self, Manifest};
use crate::config::{hash_json, Algo, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plot::{self, Series};
use crate::report;

pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const METRICS: &str = "metrics.csv";
pub const ACTOR: &str = "actor.ckpt";
pub const DATASET: &str = "windows.bin";
pub const DETECTOR: &str = "detector.ckpt";
pub const EVALUATION: &str = "evaluation.json";
pub const SUMMARY: &str = "summary.txt";

const TAG_EVAL_REPORT: u64 = 0x7e57;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Theta,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Theta => "theta",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "theta" => Ok(SweepParam::Theta),
            other => Err(HarnessError::Config(format!("cannot sweep {other:?}"))),
        }
    }
}

/// Result of one policy-training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub algo: Algo,
    pub seed: u64,
    pub steps: u64,
    pub total_cost: u64,
    pub total_cost_rate: f64,
    pub training_episodes: usize,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    #[serde(skip)]
    pub metrics: Vec<MetricsRow>,
}

impl PolicyRun {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.metrics.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub algo: Algo,
    pub seed: u64,
    pub summary: MetricsSummary,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub train: usize,
    pub holdout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorInfo {
    pub epoch_mae: Vec<f64>,
    pub train_windows: usize,
    pub calibration: ThresholdCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<PolicyRun>,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    /// Parent of the per-algorithm policy and evaluation directories.
    pub policy_root: PathBuf,
    pub force: bool,
    pub quiet: bool,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let run_dir = config.run_dir();
        Ok(Self {
            policy_root: run_dir.clone(),
            run_dir,
            config,
            force: false,
            quiet: false,
        })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.config.run_id, msg.as_ref());
        }
    }

    pub fn source_dir(&self) -> PathBuf {
        self.run_dir.join("source")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.run_dir.join("dataset")
    }

    pub fn detector_dir(&self) -> PathBuf {
        self.run_dir.join("detector")
    }

    pub fn policy_dir(&self, algo: Algo, seed: u64) -> PathBuf {
        self.policy_root
            .join("policy")
            .join(algo.as_str())
            .join(format!("seed-{seed}"))
    }

    pub fn eval_dir(&self, algo: Algo, seed: u64) -> PathBuf {
        self.policy_root
            .join("eval")
            .join(algo.as_str())
            .join(format!("seed-{seed}"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.run_dir.join("report")
    }

    // Stage hashes cover only the configuration each stage reads, so that
    // changing a downstream knob never invalidates upstream artifacts.

    pub fn collect_hash(&self) -> String {
        let c = &self.config;
        hash_json(&json!({
            "stage": "collect",
            "source": c.source,
            "agent": c.agent,
            "eval_interval": c.training.eval_interval,
            "eval_episodes": c.training.eval_episodes,
        }))
    }

    pub fn dataset_hash(&self) -> String {
        hash_json(&json!({
            "stage": "build-dataset",
            "upstream": self.collect_hash(),
            "windows": self.config.windows,
        }))
    }

    pub fn detector_hash(&self) -> String {
        let c = &self.config;
        hash_json(&json!({
            "stage": "train-detector",
            "upstream": self.dataset_hash(),
            "detector": c.detector,
            "calibration": c.calibration,
            "score_mode": c.shaping.score_mode,
        }))
    }

    pub fn policy_hash(&self, algo: Algo, seed: u64) -> String {
        let c = &self.config;
        let shaping = match algo {
            Algo::Td3Baseline => json!(null),
            Algo::CostShapingBaseline => json!({ "cost_beta": c.cost_beta() }),
            Algo::Anoseqs => json!({
                "detector": self.detector_hash(),
                "theta": c.shaping.theta,
                "beta": c.shaping.beta,
                "score_mode": c.shaping.score_mode,
            }),
        };
        hash_json(&json!({
            "stage": "train-policy",
            "algo": algo,
            "seed": seed,
            "target": c.target,
            "agent": c.agent,
            "training": c.training,
            "shaping": shaping,
        }))
    }

    pub fn eval_hash(&self, algo: Algo, seed: u64) -> String {
        hash_json(&json!({
            "stage": "evaluate",
            "upstream": self.policy_hash(algo, seed),
            "episodes": self.config.evaluation.episodes,
        }))
    }

    fn manifest(&self, stage: &str, hash: String, files: &[&str]) -> Manifest {
        Manifest {
            run_id: self.config.run_id.clone(),
            stage: stage.into(),
            config_hash: hash,
            files: files.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn actor_checkpoint(&self, actor: &Network, hash: &str, extra: &[(&str, String)]) -> Checkpoint {
        let mut ck = actor.to_checkpoint();
        ck.header.insert("run_id".into(), self.config.run_id.clone());
        ck.header.insert("config_hash".into(), hash.into());
        for (k, v) in extra {
            ck.header.insert(k.to_string(), v.clone());
        }
        ck
    }

    /// Trains the source agent on the original reward and logs every
    /// transition.
    pub fn collect(&self) -> Result<PathBuf> {
        let dir = self.source_dir();
        let hash = self.collect_hash();
        if artifacts::is_complete(&dir, &hash, self.force)? {
            self.say("collect: up to date");
            return Ok(dir.join(TRAJECTORY));
        }
        fs::create_dir_all(&dir)?;
        let c = &self.config;
        self.say(format!(
            "collect: {} steps on {} (source)",
            c.source.total_steps, c.source.env
        ));
        let mut env = c.source_env().build()?;
        let mut eval_env = c.source_env().build()?;
        let train_cfg = TrainConfig {
            total_steps: c.source.total_steps,
            eval_interval: c.training.eval_interval,
            eval_episodes: c.training.eval_episodes,
            seed: c.source.seed,
        };
        let out = train_logged(&mut env, &mut eval_env, c, &train_cfg, &dir)?;
        self.actor_checkpoint(&out.agent.actor, &hash, &[("stage", "collect".into())])
            .save(dir.join(ACTOR))?;
        self.say(format!(
            "collect: {} episodes, {} cost events",
            out.episodes.len(),
            out.total_cost
        ));
        self.manifest("collect", hash, &[TRAJECTORY, METRICS, ACTOR])
            .write(&dir)?;
        Ok(dir.join(TRAJECTORY))
    }

    pub fn build_dataset(&self) -> Result<DatasetInfo> {
        let dir = self.dataset_dir();
        let hash = self.dataset_hash();
        let path = dir.join(DATASET);
        if artifacts::is_complete(&dir, &hash, self.force)? {
            let ds = WindowDataset::load(&path)?;
            self.say("build-dataset: up to date");
            return Ok(DatasetInfo {
                train: ds.train.len(),
                holdout: ds.holdout.len(),
            });
        }
        artifacts::require(&self.source_dir())?;
        let log = read_jsonl(BufReader::new(File::open(self.source_dir().join(TRAJECTORY))?))?;
        let c = &self.config;
        let ds = sequences::build_dataset(
            &log,
            c.source.env,
            &c.windows.params(),
            &format!("{}/source", c.run_id),
            c.windows.seed,
        )?;
        fs::create_dir_all(&dir)?;
        ds.save(&path)?;
        let info = DatasetInfo {
            train: ds.train.len(),
            holdout: ds.holdout.len(),
        };
        self.say(format!(
            "build-dataset: {} safe windows ({} train, {} holdout)",
            ds.len(),
            info.train,
            info.holdout
        ));
        let meta = sequences::meta_path(Path::new(DATASET));
        self.manifest("build-dataset", hash, &[DATASET, meta.to_str().expect("utf-8")])
            .write(&dir)?;
        Ok(info)
    }

    pub fn train_detector(&self) -> Result<DetectorInfo> {
        let dir = self.detector_dir();
        let hash = self.detector_hash();
        if artifacts::is_complete(&dir, &hash, self.force)? {
            self.say("train-detector: up to date");
            return Ok(serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?);
        }
        artifacts::require(&self.dataset_dir())?;
        let c = &self.config;
        let ds = WindowDataset::load(&self.dataset_dir().join(DATASET))?;
        self.say(format!(
            "train-detector: {} epochs on {} windows",
            c.detector.epochs,
            ds.train.len()
        ));
        let mut model = DetectorModel::train(&ds, &c.detector)?;
        let scores = model.scores(&ds.holdout, c.shaping.score_mode)?;
        let cal = calibrate_threshold(&scores, c.calibration.method(), c.shaping.score_mode)?;
        self.say(format!(
            "train-detector: theta={:.6} ({} {}), holdout scores mean={:.6} std={:.6} min={:.6} max={:.6} n={}",
            cal.theta,
            cal.method.name(),
            cal.method.parameter(),
            cal.stats.mean,
            cal.stats.std,
            cal.stats.min,
            cal.stats.max,
            cal.stats.count
        ));
        model.calibration = Some(cal);
        fs::create_dir_all(&dir)?;
        let mut ck = model.to_checkpoint();
        ck.header.insert("run_id".into(), c.run_id.clone());
        ck.header.insert("config_hash".into(), hash.clone());
        let path = dir.join(DETECTOR);
        ck.save(&path)?;
        fs::write(calibration_path(&path), cal.to_text())?;
        let info = DetectorInfo {
            epoch_mae: model.report.epoch_mae.clone(),
            train_windows: model.report.train_windows,
            calibration: cal,
        };
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&info)?)?;
        let side = calibration_path(Path::new(DETECTOR));
        self.manifest(
            "train-detector",
            hash,
            &[DETECTOR, side.to_str().expect("utf-8"), "report.json"],
        )
        .write(&dir)?;
        Ok(info)
    }

    pub fn load_detector(&self) -> Result<DetectorModel> {
        artifacts::require(&self.detector_dir())?;
        Ok(DetectorModel::load(&self.detector_dir().join(DETECTOR))?)
    }

    /// Threshold used by the shaped runs: the configured one, else the
    /// calibrated one.
    pub fn theta(&self, model: &DetectorModel) -> Result<f64> {
        match (self.config.shaping.theta, &model.calibration) {
            (Some(t), _) => Ok(t),
            (None, Some(cal)) => Ok(cal.theta),
            (None, None) => Err(HarnessError::Config(
                "detector has no calibration and shaping.theta is unset".into(),
            )),
        }
    }

    pub fn train_policy(&self, algo: Algo, seed: u64) -> Result<PolicyRun> {
        let dir = self.policy_dir(algo, seed);
        let hash = self.policy_hash(algo, seed);
        if artifacts::is_complete(&dir, &hash, self.force)? {
            self.say(format!("train-policy {algo} seed {seed}: up to date"));
            return load_policy_run(&dir);
        }
        let c = &self.config;
        let train_cfg = TrainConfig {
            total_steps: c.training.total_steps,
            eval_interval: c.training.eval_interval,
            eval_episodes: c.training.eval_episodes,
            seed,
        };
        let env = c.target_env().build()?;
        let mut eval_env = c.target_env().build()?;
        fs::create_dir_all(&dir)?;
        self.say(format!(
            "train-policy {algo} seed {seed}: {} steps on {}",
            train_cfg.total_steps, c.target.env
        ));
        let (out, theta, beta) = match algo {
            Algo::Td3Baseline => {
                let mut env = env;
                (train_logged(&mut env, &mut eval_env, c, &train_cfg, &dir)?, None, None)
            }
            Algo::CostShapingBaseline => {
                let mut env = CostPenaltyEnv::new(env, c.cost_beta())?;
                let out = train_logged(&mut env, &mut eval_env, c, &train_cfg, &dir)?;
                (out, None, Some(c.cost_beta()))
            }
            Algo::Anoseqs => {
                let model = self.load_detector()?;
                let theta = self.theta(&model)?;
                let shaping = ShapingConfig {
                    theta,
                    beta: c.shaping.beta,
                    score_mode: c.shaping.score_mode,
                };
                let scorer = StreamingScorer::new(Arc::new(model), c.shaping.score_mode);
                let mut env = ShapedEnv::new(env, scorer, shaping)?;
                let out = train_logged(&mut env, &mut eval_env, c, &train_cfg, &dir)?;
                (out, Some(theta), Some(c.shaping.beta))
            }
        };
        self.actor_checkpoint(
            &out.agent.actor,
            &hash,
            &[
                ("stage", "train-policy".into()),
                ("algo", algo.as_str().into()),
                ("seed", seed.to_string()),
                ("env", c.target.env.to_string()),
            ],
        )
        .save(dir.join(ACTOR))?;
        let run = PolicyRun {
            algo,
            seed,
            steps: out.steps,
            total_cost: out.total_cost,
            total_cost_rate: out.total_cost_rate(),
            training_episodes: out.episodes.len(),
            theta,
            beta,
            metrics: out.metrics.clone(),
        };
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run)?)?;
        if let Some(last) = run.final_row() {
            self.say(format!(
                "train-policy {algo} seed {seed}: return {:.3}, episodic cost rate {:.4}, total cost rate {:.5}",
                last.episodic_return_mean, last.episodic_cost_rate_mean, run.total_cost_rate
            ));
        }
        self.manifest("train-policy", hash, &[TRAJECTORY, METRICS, ACTOR, "run.json"])
            .write(&dir)?;
        Ok(run)
    }

    pub fn load_actor(&self, algo: Algo, seed: u64) -> Result<Network> {
        let dir = self.policy_dir(algo, seed);
        artifacts::require(&dir)?;
        Ok(Network::from_checkpoint(&Checkpoint::load(dir.join(ACTOR))?)?)
    }

    /// Deterministic-policy evaluation on the target environment.
    pub fn evaluate(&self, algo: Algo, seed: u64) -> Result<Evaluation> {
        let dir = self.eval_dir(algo, seed);
        let hash = self.eval_hash(algo, seed);
        if artifacts::is_complete(&dir, &hash, self.force)? {
            self.say(format!("evaluate {algo} seed {seed}: up to date"));
            return Ok(serde_json::from_str(&fs::read_to_string(dir.join(EVALUATION))?)?);
        }
        let actor = self.load_actor(algo, seed)?;
        let eval = evaluate_actor(&self.config, &actor, algo, seed)?;
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(EVALUATION), serde_json::to_string_pretty(&eval)?)?;
        self.say(format!(
            "evaluate {algo} seed {seed}: cost {}, return {} over {} episodes",
            eval.summary.episode_cost, eval.summary.episode_return, eval.summary.episodes
        ));
        self.manifest("evaluate", hash, &[EVALUATION]).write(&dir)?;
        Ok(eval)
    }

    /// Table of pooled evaluation episodes across seeds, baseline first.
    pub fn report(&self) -> Result<String> {
        let c = &self.config;
        let mut columns = Vec::new();
        for algo in report_order(&c.algorithms) {
            let mut episodes = Vec::new();
            for &seed in &c.seeds {
                episodes.extend(self.evaluate(algo, seed)?.episodes);
            }
            columns.push((algo, metrics::summarize(&episodes)?));
        }
        let text = report::summary_table(c.target.env, &columns);
        fs::create_dir_all(self.report_dir())?;
        fs::write(self.report_dir().join(SUMMARY), &text)?;
        Ok(text)
    }

    /// Seed-averaged learning curves, one SVG per metric.
    pub fn plot(&self) -> Result<Vec<PathBuf>> {
        let c = &self.config;
        let mut series = Vec::new();
        for &algo in &c.algorithms {
            let runs: Vec<Vec<MetricsRow>> = c
                .seeds
                .iter()
                .map(|&s| read_metrics(&self.policy_dir(algo, s).join(METRICS)))
                .collect::<Result<_>>()?;
            series.push(Series {
                label: algo.label().to_string(),
                rows: plot::average_runs(&runs)?,
            });
        }
        plot::write_metric_plots(&series, &self.run_dir.join("plots"))
    }

    /// Every configured stage in order.
    pub fn run_all(&self) -> Result<String> {
        let needs_detector = self.config.algorithms.contains(&Algo::Anoseqs);
        if needs_detector {
            self.collect()?;
            self.build_dataset()?;
            self.train_detector()?;
        }
        for &seed in &self.config.seeds {
            for &algo in &self.config.algorithms {
                self.train_policy(algo, seed)?;
                self.evaluate(algo, seed)?;
            }
        }
        self.plot()?;
        self.report()
    }

    /// Pipeline writing policy runs under `sweep/<param>-<value>`, with
    /// the shaping parameter replaced.
    pub fn sweep_point(&self, param: SweepParam, value: f64) -> Result<Pipeline> {
        let mut cfg = self.config.clone();
        match param {
            SweepParam::Beta => cfg.shaping.beta = value,
            SweepParam::Theta => cfg.shaping.theta = Some(value),
        }
        cfg.validate()?;
        Ok(Pipeline {
            policy_root: self
                .run_dir
                .join("sweep")
                .join(format!("{}-{}", param.as_str(), value)),
            config: cfg,
            ..self.clone()
        })
    }

    /// One AnoSeqs training run per value per seed, sharing this run's
    /// detector. A run whose configuration matches a completed run of the
    /// base pipeline is reused from there.
    pub fn sweep(&self, param: SweepParam, values: &[f64]) -> Result<Vec<SweepPoint>> {
        if values.is_empty() {
            return Err(HarnessError::Config("sweep needs at least one value".into()));
        }
        let mut points = Vec::new();
        let mut series = Vec::new();
        for &value in values {
            let point = self.sweep_point(param, value)?;
            let mut runs = Vec::new();
            let mut evaluations = Vec::new();
            for &seed in &self.config.seeds {
                let base = if point.policy_hash(Algo::Anoseqs, seed)
                    == self.policy_hash(Algo::Anoseqs, seed)
                    && artifacts::is_complete(
                        &self.policy_dir(Algo::Anoseqs, seed),
                        &self.policy_hash(Algo::Anoseqs, seed),
                        false,
                    )? {
                    self
                } else {
                    &point
                };
                runs.push(base.train_policy(Algo::Anoseqs, seed)?);
                evaluations.push(base.evaluate(Algo::Anoseqs, seed)?);
            }
            let curves: Vec<Vec<MetricsRow>> = runs.iter().map(|r| r.metrics.clone()).collect();
            series.push(Series {
                label: format!("{} = {}", param.as_str(), value),
                rows: plot::average_runs(&curves)?,
            });
            points.push(SweepPoint {
                value,
                runs,
                evaluations,
            });
        }
        let dir = self.run_dir.join("sweep").join(param.as_str());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("summary.csv"), report::sweep_csv(param.as_str(), &points))?;
        plot::write_metric_plots(&series, &dir)?;
        Ok(points)
    }
}

fn report_order(algos: &[Algo]) -> Vec<Algo> {
    let mut out: Vec<Algo> = Algo::ALL.into_iter().filter(|a| algos.contains(a)).collect();
    out.dedup();
    out
}

/// Trains with the trajectory log streamed to `dir/trajectory.jsonl` and
/// the learning curve written to `dir/metrics.csv`.
fn train_logged<E, V>(
    env: &mut E,
    eval_env: &mut V,
    cfg: &RunConfig,
    train_cfg: &TrainConfig,
    dir: &Path,
) -> Result<TrainOutcome>
where
    E: Environment + ?Sized,
    V: Environment + ?Sized,
{
    let mut log = BufWriter::new(File::create(dir.join(TRAJECTORY))?);
    let mut sink = |r: &TrajectoryRecord| -> anoseqs::Result<()> {
        serde_json::to_writer(&mut log, r)?;
        log.write_all(b"\n")?;
        Ok(())
    };
    let out = agent::train(env, eval_env, &cfg.agent, train_cfg, &mut sink)?;
    log.flush()?;
    fs::write(dir.join(METRICS), metrics::write_csv(&out.metrics))?;
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    if !path.exists() {
        return Err(HarnessError::MissingArtifact(path.to_path_buf()));
    }
    Ok(metrics::read_csv(&fs::read_to_string(path)?)?)
}

fn load_policy_run(dir: &Path) -> Result<PolicyRun> {
    let mut run: PolicyRun = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)?;
    run.metrics = read_metrics(&dir.join(METRICS))?;
    Ok(run)
}

/// Runs `evaluation.episodes` noise-free episodes of `actor` on the
/// target environment.
pub fn evaluate_actor(cfg: &RunConfig, actor: &Network, algo: Algo, seed: u64) -> Result<Evaluation> {
    let mut env = cfg.target_env().build()?;
    let episodes = agent::evaluate(
        actor,
        &mut env,
        seeding::derive(seed, TAG_EVAL_REPORT),
        cfg.evaluation.episodes,
    )?;
    Ok(Evaluation {
        algo,
        seed,
        summary: metrics::summarize(&episodes)?,
        episodes,
    })
}
