//! Desk-scale safety environments.
//!
//! `corridor_run` is a running task between two walls with a velocity cost;
//! `hazard_point_goal` is point-mass navigation to a goal with circular
//! hazard regions that cost but do not terminate.

mod corridor;
mod hazard;

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corridor::CorridorRun;
pub use hazard::{HazardLayout, HazardPointGoal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    CorridorRun,
    HazardPointGoal,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::CorridorRun => "corridor_run",
            EnvId::HazardPointGoal => "hazard_point_goal",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corridor_run" => Ok(EnvId::CorridorRun),
            "hazard_point_goal" => Ok(EnvId::HazardPointGoal),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

/// Source environments are free to explore; target environments are where
/// safety matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Target,
}

/// Physical constants shared by both environments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub dt: f64,
    pub damping: f64,
    pub gain: f64,
    pub max_speed: f64,
    pub velocity_limit: f64,
    pub hazard_radius: f64,
    pub goal_radius: f64,
    pub arena_half_width: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            dt: 0.1,
            damping: 0.9,
            gain: 0.5,
            max_speed: 1.5,
            velocity_limit: 1.0,
            hazard_radius: 0.8,
            goal_radius: 0.3,
            arena_half_width: 5.0,
        }
    }
}

impl Physics {
    /// `v' = clamp(damping * v + gain * a, -max_speed, max_speed)`
    #[inline]
    pub fn velocity(&self, v: f64, a: f64) -> f64 {
        (self.damping * v + self.gain * a).clamp(-self.max_speed, self.max_speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub env_id: EnvId,
    pub role: Role,
    #[serde(default)]
    pub layout_seed: u64,
    /// Defaults to 300 for `corridor_run` and 200 for `hazard_point_goal`.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub physics: Physics,
}

impl EnvConfig {
    pub fn new(env_id: EnvId, role: Role, layout_seed: u64) -> Self {
        Self {
            env_id,
            role,
            layout_seed,
            max_steps: None,
            physics: Physics::default(),
        }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps.unwrap_or(match self.env_id {
            EnvId::CorridorRun => 300,
            EnvId::HazardPointGoal => 200,
        })
    }

    pub fn state_dim(&self) -> usize {
        match self.env_id {
            EnvId::CorridorRun => CorridorRun::STATE_DIM,
            EnvId::HazardPointGoal => HazardPointGoal::STATE_DIM,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment + Send>> {
        if self.max_steps() == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(match self.env_id {
            EnvId::CorridorRun => Box::new(CorridorRun::new(self.clone())),
            EnvId::HazardPointGoal => Box::new(HazardPointGoal::new(self.clone())),
        })
    }
}

/// One environment observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for StateVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for StateVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVec {
    fn from(v: Vec<f64>) -> Self {
        StateVec(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: StateVec,
    /// Task reward as defined by the environment.
    pub reward: f64,
    /// Reward the learner sees. Equal to `reward` unless a wrapper shapes it.
    pub reward_used: f64,
    pub cost: u8,
    pub terminated: bool,
    /// Terminated because of a safety violation.
    pub failure: bool,
    /// Hit the step limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Velocity limit for `corridor_run`, goal radius for `hazard_point_goal`.
    pub threshold: f64,
    pub role: Role,
    pub max_steps: usize,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. Deterministic in the layout seed and `episode_seed`.
    fn reset(&mut self, episode_seed: u64) -> StateVec;

    /// Advances one step. Action components are clamped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, episode_seed: u64) -> StateVec {
        (**self).reset(episode_seed)
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        (**self).step(action)
    }
}

pub(crate) fn check_action(action: &[f64], expected: usize) -> Result<[f64; 2]> {
    if action.len() != expected {
        return Err(Error::ActionDim {
            expected,
            actual: action.len(),
        });
    }
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    Ok([clamp(action[0]), clamp(action[1])])
}
