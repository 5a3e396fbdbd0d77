use std::path::Path;

use netcore::{Activation, Adam, AdamConfig, Checkpoint, LayerSpec, Matrix, NetSpec, Network};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::calibration::ThresholdCalibration;
use crate::error::{Error, Result};
use crate::seeding;
use crate::sequences::{StateWindow, WindowDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Mean absolute reconstruction error.
    #[default]
    Mae,
    /// `T * MAE`.
    Paper,
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Mae => "mae",
            ScoreMode::Paper => "paper",
        })
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(ScoreMode::Mae),
            "paper" => Ok(ScoreMode::Paper),
            other => Err(Error::Config(format!("unknown score mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub model_width: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            model_width: 32,
            heads: 2,
            blocks: 2,
            ff_width: 64,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("detector: {m}")));
        if self.model_width == 0 || self.heads == 0 || self.model_width % self.heads != 0 {
            return bad("heads must divide a positive model width");
        }
        if self.ff_width == 0 || self.batch_size == 0 {
            return bad("ff_width and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn net_spec(&self, state_dim: usize) -> NetSpec {
        let d = self.model_width;
        let mut layers = vec![
            LayerSpec::Dense {
                input: state_dim,
                output: d,
                activation: Activation::Identity,
            },
            LayerSpec::PositionalEncoding { width: d },
        ];
        for _ in 0..self.blocks {
            layers.push(LayerSpec::EncoderBlock {
                width: d,
                heads: self.heads,
                ff_width: self.ff_width,
            });
        }
        layers.push(LayerSpec::Dense {
            input: d,
            output: state_dim,
            activation: Activation::Identity,
        });
        NetSpec::new(layers, seeding::derive(self.seed, 0xde7))
    }
}

/// Per-feature affine map applied before the network and undone after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(m: usize) -> Self {
        Self {
            mean: vec![0.0; m],
            std: vec![1.0; m],
        }
    }

    /// Statistics over every row of every window. Features with (near) zero
    /// spread keep unit scale.
    pub fn fit(windows: &[StateWindow], m: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; m];
        let mut sq = vec![0.0; m];
        for w in windows {
            for row in w.states.iter_rows() {
                n += 1;
                for j in 0..m {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
        }
        if n == 0 {
            return Self::identity(m);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = (0..m)
            .map(|j| {
                let var = (sq[j] / nf - mean[j] * mean[j]).max(0.0);
                let s = var.sqrt();
                if s < 1e-6 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    fn invert(&self, y: &mut Matrix) {
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training-window MAE seen during each epoch.
    pub epoch_mae: Vec<f64>,
    pub train_windows: usize,
}

/// Transformer autoencoder over `T x M` windows.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub net: Network,
    pub window_len: usize,
    pub state_dim: usize,
    pub normalizer: Normalizer,
    pub report: TrainingReport,
    pub calibration: Option<ThresholdCalibration>,
}

pub fn window_mae(window: &Matrix, reconstruction: &Matrix) -> f64 {
    assert_eq!(window.shape(), reconstruction.shape(), "window_mae shape mismatch");
    let n = window.data().len();
    window
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n as f64
}

/// Anomaly score from an already computed MAE.
pub fn score_from_mae(mae: f64, window_len: usize, mode: ScoreMode) -> f64 {
    match mode {
        ScoreMode::Mae => mae,
        ScoreMode::Paper => window_len as f64 * mae,
    }
}

impl DetectorModel {
    /// Untrained model with identity normalization.
    pub fn new(window_len: usize, state_dim: usize, config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        if window_len < 2 || state_dim == 0 {
            return Err(Error::Config("window_len >= 2 and state_dim >= 1 required".into()));
        }
        Ok(Self {
            net: Network::new(config.net_spec(state_dim))?,
            window_len,
            state_dim,
            normalizer: Normalizer::identity(state_dim),
            report: TrainingReport::default(),
            calibration: None,
        })
    }

    fn check_shape(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.window_len, self.state_dim) {
            return Err(Error::WindowShape {
                rows: self.window_len,
                cols: self.state_dim,
                actual_rows: x.rows(),
                actual_cols: x.cols(),
            });
        }
        Ok(())
    }

    pub fn reconstruct(&self, window: &Matrix) -> Result<Matrix> {
        self.check_shape(window)?;
        let mut y = self.net.forward(&self.normalizer.apply(window))?;
        self.normalizer.invert(&mut y);
        Ok(y)
    }

    pub fn mae(&self, window: &Matrix) -> Result<f64> {
        Ok(window_mae(window, &self.reconstruct(window)?))
    }

    pub fn anomaly_score(&self, window: &Matrix, mode: ScoreMode) -> Result<f64> {
        Ok(score_from_mae(self.mae(window)?, self.window_len, mode))
    }

    pub fn scores(&self, windows: &[StateWindow], mode: ScoreMode) -> Result<Vec<f64>> {
        windows
            .iter()
            .map(|w| self.anomaly_score(&w.states, mode))
            .collect()
    }

    /// Fits the normalizer on the training split, then minimizes the MAE
    /// reconstruction loss with Adam.
    pub fn train(dataset: &WindowDataset, config: &DetectorConfig) -> Result<Self> {
        if dataset.train.is_empty() {
            return Err(Error::NoSafeWindows("training split is empty".into()));
        }
        let (t, m) = (dataset.window_len, dataset.state_dim);
        let mut model = Self::new(t, m, config)?;
        model.normalizer = Normalizer::fit(&dataset.train, m);
        let inputs: Vec<Matrix> = dataset
            .train
            .iter()
            .map(|w| {
                model.check_shape(&w.states)?;
                Ok(model.normalizer.apply(&w.states))
            })
            .collect::<Result<_>>()?;

        let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate))?;
        let mut rng = seeding::rng(config.seed, 0x5f1e);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let scale = 1.0 / (t * m) as f64;
        let mut report = TrainingReport {
            epoch_mae: Vec::with_capacity(config.epochs),
            train_windows: inputs.len(),
        };

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(config.batch_size) {
                model.net.zero_grad();
                let b = batch.len() as f64;
                for &i in batch {
                    let target = &dataset.train[i].states;
                    let out = model.net.forward_train(&inputs[i])?;
                    let mut grad = Matrix::zeros(t, m);
                    let mut err = 0.0;
                    for r in 0..t {
                        for j in 0..m {
                            let std = model.normalizer.std[j];
                            let recon = out.get(r, j) * std + model.normalizer.mean[j];
                            let diff = recon - target.get(r, j);
                            err += diff.abs();
                            grad.set(r, j, diff.signum() * std * scale / b);
                        }
                    }
                    model.net.backward(&grad)?;
                    total += err * scale;
                }
                adam.step(&mut model.net.params_mut())?;
            }
            let mean = total / inputs.len() as f64;
            if !mean.is_finite() {
                return Err(Error::Diverged(format!("detector loss at epoch {epoch} is {mean}")));
            }
            report.epoch_mae.push(mean);
        }
        model.report = report;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.net.to_checkpoint();
        ck.header.insert("window_len".into(), self.window_len.to_string());
        ck.header.insert("state_dim".into(), self.state_dim.to_string());
        ck.push_tensor("normalizer.mean", &[self.state_dim], &self.normalizer.mean);
        ck.push_tensor("normalizer.std", &[self.state_dim], &self.normalizer.std);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "detector checkpoint",
            detail,
        };
        let num = |k: &str| -> Result<usize> {
            ck.get(k)?
                .parse()
                .map_err(|_| bad(format!("{k} is not an integer")))
        };
        let (t, m) = (num("window_len")?, num("state_dim")?);
        let vec = |name: &str| -> Result<Vec<f64>> {
            let tr = ck
                .tensor(name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if tr.values.len() != m {
                return Err(bad(format!("{name} has {} values", tr.values.len())));
            }
            Ok(tr.values.iter().map(|&v| v as f64).collect())
        };
        let normalizer = Normalizer {
            mean: vec("normalizer.mean")?,
            std: vec("normalizer.std")?,
        };
        let net = Network::from_checkpoint(ck)?;
        if net.input_width() != m || net.output_width() != m {
            return Err(bad("network width disagrees with state_dim".into()));
        }
        Ok(Self {
            net,
            window_len: t,
            state_dim: m,
            normalizer,
            report: TrainingReport::default(),
            calibration: None,
        })
    }

    /// Writes the checkpoint and, when calibrated, the `path.calibration`
    /// sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)?;
        if let Some(cal) = &self.calibration {
            std::fs::write(calibration_path(path), cal.to_text())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut model = Self::from_checkpoint(&Checkpoint::load(path)?)?;
        let side = calibration_path(path);
        if side.exists() {
            model.calibration = Some(ThresholdCalibration::from_text(&std::fs::read_to_string(side)?)?);
        }
        Ok(model)
    }
}

pub fn calibration_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".calibration");
    s.into()
}
