//! Reinforcement-learning control of the noise distribution.
//!
//! The state is the current [`NoiseState`], an action is a bounded change
//! `(d_mu, d_sigma)`, and the reward comes from an [`Environment`] (the
//! detector's training loss during training, or a planted objective when
//! validating the agents in isolation).

mod agent;
mod ddpg;
mod dqn;
mod replay;
mod reward;

pub use agent::{run_control_loop, Agent, ControllerKind, EnvFeedback, Environment, LoopSpec, StepTrace};
pub use ddpg::{actor_objective_and_grad, policy_gradient_step, ActionValue, DdpgAgent};
pub use dqn::{DqnAgent, DQN_ACTIONS};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{reward, shaped_reward, REWARD_MAX};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::NoiseState;

/// Change applied to (mu, sigma) in one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub d_mu: f64,
    pub d_sigma: f64,
}

impl Action {
    pub const ZERO: Action = Action { d_mu: 0.0, d_sigma: 0.0 };

    pub fn clipped(self, bound: f64) -> Action {
        Action {
            d_mu: self.d_mu.clamp(-bound, bound),
            d_sigma: self.d_sigma.clamp(-bound, bound),
        }
    }

    pub fn within(&self, bound: f64) -> bool {
        self.d_mu.abs() <= bound && self.d_sigma.abs() <= bound
    }
}

/// Next state: each parameter shifted by the action and clipped to the bounds.
pub fn apply_action(s: &NoiseState, a: Action) -> NoiseState {
    s.with_clipped(s.mu + a.d_mu, s.sigma + a.d_sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub gamma: f64,
    pub tau: f64,
    pub action_bound: f64,
    /// Std of the additive Gaussian exploration noise, in action units.
    pub explore_std: f64,
    pub explore_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Updates start once the buffer holds this many transitions (and at least a batch).
    pub warmup: usize,
    /// While exploring, the first this-many actions are drawn uniformly from the action box.
    pub random_steps: usize,
    pub updates_per_step: usize,
    pub hidden: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_decay: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Standardize rewards with statistics frozen at the first update.
    pub normalize_rewards: bool,
}

/// Affine reward map `(r - mean) / std` fixed once learning starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub mean: f64,
    pub std: f64,
}

impl RewardScale {
    pub const IDENTITY: RewardScale = RewardScale { mean: 0.0, std: 1.0 };

    /// Population statistics of `rewards`; a spread below 1e-8 keeps unit scale.
    pub fn fit(rewards: &[f64]) -> Self {
        if rewards.is_empty() {
            return Self::IDENTITY;
        }
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() < 1e-8 { 1.0 } else { var.sqrt() };
        RewardScale { mean, std }
    }

    pub fn apply(&self, r: f64) -> f64 {
        (r - self.mean) / self.std
    }
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.99,
            tau: 0.005,
            action_bound: 0.05,
            explore_std: 0.01,
            explore_decay: 0.99,
            batch_size: 64,
            buffer_capacity: 10_000,
            warmup: 64,
            random_steps: 0,
            updates_per_step: 1,
            hidden: 64,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_decay: 0.995,
            epsilon_start: 0.9,
            epsilon_decay: 0.98,
            epsilon_floor: 0.05,
            normalize_rewards: true,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0,1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) && self.tau != 1.0 {
            return Err(Error::invalid(format!("tau {} outside (0,1]", self.tau)));
        }
        if !(self.action_bound > 0.0 && self.action_bound.is_finite()) {
            return Err(Error::invalid("action_bound must be positive"));
        }
        if !(self.explore_std >= 0.0) || !(self.explore_decay > 0.0 && self.explore_decay <= 1.0) {
            return Err(Error::invalid("exploration std must be >= 0 and decay in (0,1]"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::invalid("need 0 < batch_size <= buffer_capacity"));
        }
        if self.updates_per_step == 0 || self.hidden == 0 {
            return Err(Error::invalid("updates_per_step and hidden must be positive"));
        }
        for (name, lr) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must be in (0,1]"));
        }
        let eps_ok = (0.0..=1.0).contains(&self.epsilon_floor)
            && (self.epsilon_floor..=1.0).contains(&self.epsilon_start)
            && self.epsilon_decay > 0.0
            && self.epsilon_decay <= 1.0;
        if !eps_ok {
            return Err(Error::invalid("epsilon schedule must satisfy 0 <= floor <= start <= 1"));
        }
        Ok(())
    }
}
