use rand::Rng;

use super::{check_action, EnvConfig, EnvId, EnvSpec, Environment, Role, StateVec, StepResult};
use crate::error::{Error, Result};
use crate::seeding;

const GOAL_BONUS: f64 = 10.0;
const CLEARANCE_MIN: f64 = -1.0;
const CLEARANCE_MAX: f64 = 5.0;
const MIN_SEPARATION: f64 = 1.5;
const START_CLEARANCE: f64 = 0.3;
const START_GOAL_DISTANCE: f64 = 2.0;

/// Goal and hazard centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardLayout {
    pub goal: [f64; 2],
    pub hazards: [[f64; 2]; 2],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl HazardLayout {
    /// Goal inside the central region; hazards 1.5 to 2.5 from the goal so
    /// that they often sit on the approach path, and at least 1.5 apart.
    pub fn generate(seed: u64) -> Self {
        let mut rng = seeding::rng(seed, 0x1a70);
        let goal = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let mut hazards = [[0.0; 2]; 2];
        let mut placed = 0;
        while placed < 2 {
            let r = rng.random_range(MIN_SEPARATION..2.5);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let h = [goal[0] + r * angle.cos(), goal[1] + r * angle.sin()];
            if h[0].abs() > 4.5 || h[1].abs() > 4.5 {
                continue;
            }
            if hazards[..placed]
                .iter()
                .any(|&o| dist(o, h) < MIN_SEPARATION)
            {
                continue;
            }
            hazards[placed] = h;
            placed += 1;
        }
        Self { goal, hazards }
    }
}

/// Point-mass navigation to a goal around two circular hazards.
///
/// State: `[x, y, vx, vy, gx - x, gy - y, c1, c2]` with `ci` the signed
/// clearance to hazard `i` clamped to `[-1, 5]`. Reward is twice the
/// reduction in goal distance, plus 10 on reaching the goal (which ends the
/// episode). Entering a hazard costs but does not terminate.
#[derive(Debug, Clone)]
pub struct HazardPointGoal {
    config: EnvConfig,
    layout: HazardLayout,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
    done: bool,
}

impl HazardPointGoal {
    pub const STATE_DIM: usize = 8;
    pub const ACTION_DIM: usize = 2;

    pub fn new(config: EnvConfig) -> Self {
        debug_assert_eq!(config.env_id, EnvId::HazardPointGoal);
        let layout = HazardLayout::generate(config.layout_seed);
        Self {
            config,
            layout,
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
            done: true,
        }
    }

    pub fn layout(&self) -> &HazardLayout {
        &self.layout
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    /// Unclamped signed distance from the hazard boundary.
    pub fn clearance(&self, hazard: usize) -> f64 {
        dist(self.pos, self.layout.hazards[hazard]) - self.config.physics.hazard_radius
    }

    fn goal_distance(&self) -> f64 {
        dist(self.pos, self.layout.goal)
    }

    fn observe(&self) -> StateVec {
        let g = self.layout.goal;
        StateVec(vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            g[0] - self.pos[0],
            g[1] - self.pos[1],
            self.clearance(0).clamp(CLEARANCE_MIN, CLEARANCE_MAX),
            self.clearance(1).clamp(CLEARANCE_MIN, CLEARANCE_MAX),
        ])
    }
}

impl Environment for HazardPointGoal {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            env_id: EnvId::HazardPointGoal,
            state_dim: Self::STATE_DIM,
            action_dim: Self::ACTION_DIM,
            threshold: self.config.physics.goal_radius,
            role: self.config.role,
            max_steps: self.config.max_steps(),
        }
    }

    /// Target environments keep the layout fixed by `layout_seed`; source
    /// environments draw a fresh layout per episode. The start position is
    /// drawn per episode in both cases.
    fn reset(&mut self, episode_seed: u64) -> StateVec {
        let episode_key = seeding::derive(self.config.layout_seed, episode_seed);
        if self.config.role == Role::Source {
            self.layout = HazardLayout::generate(episode_key);
        }
        let mut rng = seeding::rng(episode_key, 0x57a7);
        let half = self.config.physics.arena_half_width - 0.5;
        let radius = self.config.physics.hazard_radius;
        let mut pos = [0.0; 2];
        for _ in 0..10_000 {
            pos = [rng.random_range(-half..half), rng.random_range(-half..half)];
            let clear = self
                .layout
                .hazards
                .iter()
                .all(|&h| dist(pos, h) - radius >= START_CLEARANCE);
            if clear && dist(pos, self.layout.goal) >= START_GOAL_DISTANCE {
                break;
            }
        }
        self.pos = pos;
        self.vel = [0.0; 2];
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let a = check_action(action, Self::ACTION_DIM)?;
        let p = self.config.physics;
        let before = self.goal_distance();
        for i in 0..2 {
            self.vel[i] = p.velocity(self.vel[i], a[i]);
            self.pos[i] = (self.pos[i] + p.dt * self.vel[i])
                .clamp(-p.arena_half_width, p.arena_half_width);
        }
        self.steps += 1;

        let after = self.goal_distance();
        let reached = after < p.goal_radius;
        let mut reward = 2.0 * (before - after);
        if reached {
            reward += GOAL_BONUS;
        }
        let cost = u8::from((0..2).any(|i| self.clearance(i) < 0.0));
        let truncated = !reached && self.steps >= self.config.max_steps();
        self.done = reached || truncated;
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            reward_used: reward,
            cost,
            terminated: reached,
            failure: false,
            truncated,
        })
    }
}
