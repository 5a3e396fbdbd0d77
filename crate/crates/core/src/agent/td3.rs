//! Twin-delayed deterministic policy gradient: two critics with clipped
//! double-Q targets, target-policy smoothing, and delayed actor updates.

use netcore::{Activation, Adam, AdamConfig, Matrix, NetSpec, Network};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub policy_delay: u64,
    pub target_noise_sigma: f64,
    pub target_noise_clip: f64,
    pub exploration_noise_sigma: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            policy_delay: 2,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            exploration_noise_sigma: 0.1,
            batch_size: 128,
            warmup_steps: 1000,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must be in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must be in (0, 1]");
        }
        if self.policy_delay < 1 {
            return fail("policy_delay must be at least 1");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return fail("batch size and buffer capacity must be positive");
        }
        if self.target_noise_sigma < 0.0
            || self.target_noise_clip < 0.0
            || self.exploration_noise_sigma < 0.0
        {
            return fail("noise parameters must be non-negative");
        }
        Ok(())
    }
}

/// `y = r + gamma * min(q1', q2')`, without the bootstrap term on terminal
/// transitions.
pub fn critic_target(reward: f64, done: bool, q1_next: f64, q2_next: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q1_next.min(q2_next)
    }
}

/// Noise-free policy action, clamped to `[-1, 1]`.
pub fn greedy_action(actor: &Network, state: &[f64]) -> Result<Vec<f64>> {
    let out = actor.forward(&Matrix::row_vector(state))?;
    Ok(out.data().iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

/// Behavior policy: actor output plus Gaussian noise, clamped to `[-1, 1]`.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Network,
    state: &[f64],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let out = actor.forward(&Matrix::row_vector(state))?;
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma > 0"));
    Ok(out
        .data()
        .iter()
        .map(|&a| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            (a + n).clamp(-1.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateReport {
    /// Buffer held fewer than `batch_size` transitions; nothing changed.
    pub skipped: bool,
    /// Mean of the two critics' squared TD errors.
    pub critic_loss: f64,
    /// `-mean Q1(s, pi(s))`, present on delayed actor steps.
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub config: AgentConfig,
    pub actor: Network,
    pub critic1: Network,
    pub critic2: Network,
    pub actor_target: Network,
    pub critic1_target: Network,
    pub critic2_target: Network,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    state_dim: usize,
    action_dim: usize,
    actor_updates: u64,
}

impl Td3Agent {
    pub fn new(state_dim: usize, action_dim: usize, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let actor_spec = NetSpec::mlp(
            state_dim,
            &config.hidden,
            action_dim,
            Activation::Relu,
            Activation::Tanh,
            seeding::derive(seed, 0xac70),
        );
        let critic_spec = |tag| {
            NetSpec::mlp(
                state_dim + action_dim,
                &config.hidden,
                1,
                Activation::Relu,
                Activation::Identity,
                seeding::derive(seed, tag),
            )
        };
        let actor = Network::new(actor_spec)?;
        let critic1 = Network::new(critic_spec(0xc1))?;
        let critic2 = Network::new(critic_spec(0xc2))?;
        Ok(Self {
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_lr))?,
            critic1_opt: Adam::new(AdamConfig::with_lr(config.critic_lr))?,
            critic2_opt: Adam::new(AdamConfig::with_lr(config.critic_lr))?,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            config,
            state_dim,
            action_dim,
            actor_updates: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// One TD3 update. `step_index` counts update calls from 1; the actor and
    /// targets move only when it is a multiple of `policy_delay`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        step_index: u64,
        rng: &mut R,
    ) -> Result<UpdateReport> {
        let cfg = &self.config;
        let n = cfg.batch_size;
        if buffer.len() < n {
            return Ok(UpdateReport {
                skipped: true,
                ..UpdateReport::default()
            });
        }
        let batch = buffer.sample(n, rng);
        let (sd, ad) = (self.state_dim, self.action_dim);

        let mut states = Matrix::zeros(n, sd);
        let mut next_states = Matrix::zeros(n, sd);
        let mut actions = Matrix::zeros(n, ad);
        for (i, t) in batch.iter().enumerate() {
            states.row_mut(i).copy_from_slice(&t.state);
            next_states.row_mut(i).copy_from_slice(&t.next_state);
            actions.row_mut(i).copy_from_slice(&t.action);
        }

        // Smoothed target action.
        let mut next_actions = self.actor_target.forward(&next_states)?;
        if cfg.target_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, cfg.target_noise_sigma).expect("sigma > 0");
            let clip = cfg.target_noise_clip;
            for a in next_actions.data_mut() {
                *a = (*a + noise.sample(rng).clamp(-clip, clip)).clamp(-1.0, 1.0);
            }
        }
        let next_input = Matrix::hconcat(&next_states, &next_actions);
        let q1_next = self.critic1_target.forward(&next_input)?;
        let q2_next = self.critic2_target.forward(&next_input)?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                critic_target(
                    t.reward_used,
                    t.done_for_bootstrap,
                    q1_next.data()[i],
                    q2_next.data()[i],
                    cfg.gamma,
                )
            })
            .collect();

        let input = Matrix::hconcat(&states, &actions);
        let mut critic_loss = 0.0;
        for (critic, opt) in [
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ] {
            critic.zero_grad();
            let q = critic.forward_train(&input)?;
            let mut grad = Matrix::zeros(n, 1);
            let mut loss = 0.0;
            for i in 0..n {
                let e = q.data()[i] - targets[i];
                loss += e * e;
                grad.data_mut()[i] = 2.0 * e / n as f64;
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("critic loss {loss}")));
            }
            critic.backward(&grad)?;
            opt.step(&mut critic.params_mut())?;
            critic_loss += 0.5 * loss;
        }

        let mut actor_loss = None;
        if step_index % cfg.policy_delay == 0 {
            self.actor.zero_grad();
            let pi = self.actor.forward_train(&states)?;
            let q = self.critic1.forward_train(&Matrix::hconcat(&states, &pi))?;
            let loss = -q.data().iter().sum::<f64>() / n as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("actor loss {loss}")));
            }
            let dq = Matrix::from_vec(n, 1, vec![-1.0 / n as f64; n]);
            let d_input = self.critic1.backward(&dq)?;
            // Critic gradients from the policy objective are discarded.
            self.critic1.zero_grad();
            self.actor.backward(&d_input.columns(sd, ad))?;
            self.actor_opt.step(&mut self.actor.params_mut())?;
            self.actor_updates += 1;
            actor_loss = Some(loss);

            let tau = cfg.tau;
            self.actor_target.soft_update_from(&self.actor, tau);
            self.critic1_target.soft_update_from(&self.critic1, tau);
            self.critic2_target.soft_update_from(&self.critic2, tau);
        }

        Ok(UpdateReport {
            skipped: false,
            critic_loss,
            actor_loss,
        })
    }
}
