//! Anomaly-penalized reward and environment wrappers that apply it.

use serde::{Deserialize, Serialize};

use crate::detector::{AnomalyScorer, ScoreMode};
use crate::envs::{EnvSpec, Environment, StateVec, StepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    pub theta: f64,
    pub beta: f64,
    pub score_mode: ScoreMode,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            beta: 100.0,
            score_mode: ScoreMode::Mae,
        }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("beta must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// `r_orig` when `eta <= theta`, otherwise `r_orig - beta * eta`.
pub fn shape_reward(r_orig: f64, eta: f64, theta: f64, beta: f64) -> f64 {
    if eta <= theta {
        r_orig
    } else {
        r_orig - beta * eta
    }
}

/// Feeds every next state to a scorer and penalizes the learning reward.
pub struct ShapedEnv<E, S> {
    inner: E,
    scorer: S,
    config: ShapingConfig,
    last_eta: f64,
}

impl<E: Environment, S: AnomalyScorer> ShapedEnv<E, S> {
    pub fn new(inner: E, scorer: S, config: ShapingConfig) -> Result<Self> {
        config.validate()?;
        let dim = inner.spec().state_dim;
        if scorer.state_dim() != dim {
            return Err(Error::StateDim {
                expected: dim,
                actual: scorer.state_dim(),
            });
        }
        Ok(Self {
            inner,
            scorer,
            config,
            last_eta: 0.0,
        })
    }

    /// Score applied to the most recent step; 0 during warm-up.
    pub fn last_eta(&self) -> f64 {
        self.last_eta
    }

    pub fn config(&self) -> &ShapingConfig {
        &self.config
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment, S: AnomalyScorer> Environment for ShapedEnv<E, S> {
    fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, episode_seed: u64) -> StateVec {
        self.scorer.reset();
        self.last_eta = 0.0;
        self.inner.reset(episode_seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        let eta = self.scorer.feed(&r.next_state)?.unwrap_or(0.0);
        self.last_eta = eta;
        r.reward_used = shape_reward(r.reward, eta, self.config.theta, self.config.beta);
        Ok(r)
    }
}

/// Learning reward `r - beta * cost`.
pub struct CostPenaltyEnv<E> {
    inner: E,
    beta: f64,
}

impl<E: Environment> CostPenaltyEnv<E> {
    pub fn new(inner: E, beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config("beta must be finite and non-negative".into()));
        }
        Ok(Self { inner, beta })
    }
}

impl<E: Environment> Environment for CostPenaltyEnv<E> {
    fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, episode_seed: u64) -> StateVec {
        self.inner.reset(episode_seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        r.reward_used = r.reward - self.beta * f64::from(r.cost);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvConfig, EnvId, Role};

    #[test]
    fn table_row_below_threshold() {
        assert_eq!(shape_reward(1.2, 0.0005, 0.00089, 100.0), 1.2);
    }

    #[test]
    fn above_threshold() {
        assert!((shape_reward(1.2, 0.002, 0.00089, 100.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_inclusive() {
        assert_eq!(shape_reward(0.7, 0.00089, 0.00089, 100.0), 0.7);
    }

    struct Fixed(f64, usize);

    impl AnomalyScorer for Fixed {
        fn state_dim(&self) -> usize {
            self.1
        }
        fn feed(&mut self, _: &[f64]) -> Result<Option<f64>> {
            Ok(Some(self.0))
        }
        fn reset(&mut self) {}
    }

    #[test]
    fn stub_scorer_penalty() {
        assert!((shape_reward(1.0, 0.01, 0.005, 10.0) - 0.9).abs() < 1e-12);
        let env = EnvConfig::new(EnvId::CorridorRun, Role::Target, 0).build().unwrap();
        let cfg = ShapingConfig {
            theta: 0.005,
            beta: 10.0,
            score_mode: ScoreMode::Mae,
        };
        let mut shaped = ShapedEnv::new(env, Fixed(0.01, 5), cfg).unwrap();
        shaped.reset(0);
        let r = shaped.step(&[0.5, 0.0]).unwrap();
        assert!((r.reward_used - (r.reward - 0.1)).abs() < 1e-12);
        assert_eq!(shaped.last_eta(), 0.01);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let env = EnvConfig::new(EnvId::CorridorRun, Role::Target, 0).build().unwrap();
        assert!(matches!(
            ShapedEnv::new(env, Fixed(0.0, 8), ShapingConfig::default()),
            Err(Error::StateDim { .. })
        ));
    }

    #[test]
    fn negative_beta_rejected() {
        let cfg = ShapingConfig {
            beta: -1.0,
            ..ShapingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
