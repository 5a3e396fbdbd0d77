use std::collections::VecDeque;
use std::sync::Arc;

use netcore::Matrix;

use super::model::{DetectorModel, ScoreMode};
use crate::error::{Error, Result};

/// Online source of anomaly scores for a stream of states.
pub trait AnomalyScorer {
    fn state_dim(&self) -> usize;
    /// Records `state` and returns the score of the trailing window, or
    /// `None` while fewer than a full window of states has been seen.
    fn feed(&mut self, state: &[f64]) -> Result<Option<f64>>;
    /// Clears the history at an episode boundary.
    fn reset(&mut self);
}

/// Scores the trailing `T` states after every step.
#[derive(Debug, Clone)]
pub struct StreamingScorer {
    model: Arc<DetectorModel>,
    mode: ScoreMode,
    history: VecDeque<Vec<f64>>,
}

impl StreamingScorer {
    pub fn new(model: Arc<DetectorModel>, mode: ScoreMode) -> Self {
        let cap = model.window_len;
        Self {
            model,
            mode,
            history: VecDeque::with_capacity(cap),
        }
    }

    pub fn model(&self) -> &DetectorModel {
        &self.model
    }

    pub fn mode(&self) -> ScoreMode {
        self.mode
    }
}

impl AnomalyScorer for StreamingScorer {
    fn state_dim(&self) -> usize {
        self.model.state_dim
    }

    fn feed(&mut self, state: &[f64]) -> Result<Option<f64>> {
        if state.len() != self.model.state_dim {
            return Err(Error::StateDim {
                expected: self.model.state_dim,
                actual: state.len(),
            });
        }
        if self.history.len() == self.model.window_len {
            self.history.pop_front();
        }
        self.history.push_back(state.to_vec());
        if self.history.len() < self.model.window_len {
            return Ok(None);
        }
        let window = Matrix::from_rows(self.history.make_contiguous());
        self.model.anomaly_score(&window, self.mode).map(Some)
    }

    fn reset(&mut self) {
        self.history.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;

    #[test]
    fn warm_up_then_trailing_window() {
        let model = Arc::new(DetectorModel::new(3, 2, &DetectorConfig::default()).unwrap());
        let mut s = StreamingScorer::new(model.clone(), ScoreMode::Mae);
        let states: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.5 * i as f64]).collect();
        assert_eq!(s.feed(&states[0]).unwrap(), None);
        assert_eq!(s.feed(&states[1]).unwrap(), None);
        let eta = s.feed(&states[2]).unwrap().unwrap();
        assert_eq!(eta, model.anomaly_score(&Matrix::from_rows(&states[0..3]), ScoreMode::Mae).unwrap());
        let eta = s.feed(&states[3]).unwrap().unwrap();
        assert_eq!(eta, model.anomaly_score(&Matrix::from_rows(&states[1..4]), ScoreMode::Mae).unwrap());
        s.reset();
        assert_eq!(s.feed(&states[4]).unwrap(), None);
        assert!(matches!(s.feed(&[1.0]), Err(Error::StateDim { .. })));
    }
}
