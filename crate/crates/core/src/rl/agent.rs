use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_action, Action, DdpgAgent, DqnAgent, ReplayBuffer, RewardScale, RlConfig, Transition};
use crate::error::{Error, Result};
use crate::perturb::NoiseState;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Ddpg,
    Dqn,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(ControllerKind::Ddpg),
            "dqn" => Ok(ControllerKind::Dqn),
            other => Err(Error::invalid(format!("unknown controller {other:?} (expected ddpg|dqn)"))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Ddpg => "ddpg",
            ControllerKind::Dqn => "dqn",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Agent {
    Ddpg(DdpgAgent),
    Dqn(DqnAgent),
}

impl Agent {
    pub fn new(kind: ControllerKind, config: RlConfig, rng: &mut Stream) -> Result<Self> {
        Ok(match kind {
            ControllerKind::Ddpg => Agent::Ddpg(DdpgAgent::new(config, rng)?),
            ControllerKind::Dqn => Agent::Dqn(DqnAgent::new(config, rng)?),
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Agent::Ddpg(_) => ControllerKind::Ddpg,
            Agent::Dqn(_) => ControllerKind::Dqn,
        }
    }

    pub fn config(&self) -> &RlConfig {
        match self {
            Agent::Ddpg(a) => a.config(),
            Agent::Dqn(a) => a.config(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Agent::Ddpg(a) => a.is_finite(),
            Agent::Dqn(a) => a.is_finite(),
        }
    }

    pub fn act(&self, s: &NoiseState, explore: bool, rng: &mut Stream) -> Result<Action> {
        match self {
            Agent::Ddpg(a) => a.select_action(s, explore, rng),
            Agent::Dqn(a) => {
                let i = if explore { a.select(s, rng)? } else { a.greedy(s)? };
                Ok(a.action(i))
            }
        }
    }

    /// Runs the configured number of gradient updates if the buffer is warm.
    /// Returns the mean critic (or Q) loss of the updates performed.
    pub fn learn(&mut self, buffer: &ReplayBuffer, rng: &mut Stream) -> Result<Option<f64>> {
        let cfg = *self.config();
        if buffer.len() < cfg.warmup.max(cfg.batch_size) {
            return Ok(None);
        }
        let slot = match self {
            Agent::Ddpg(a) => &mut a.reward_scale,
            Agent::Dqn(a) => &mut a.reward_scale,
        };
        if slot.is_none() {
            *slot = Some(if cfg.normalize_rewards {
                RewardScale::fit(&buffer.iter().map(|t| t.reward).collect::<Vec<_>>())
            } else {
                RewardScale::IDENTITY
            });
        }
        let scale = slot.unwrap_or(RewardScale::IDENTITY);
        let mut total = 0.0;
        for _ in 0..cfg.updates_per_step {
            let mut batch = buffer.sample(cfg.batch_size, rng)?;
            for t in &mut batch {
                t.reward = scale.apply(t.reward);
            }
            total += match self {
                Agent::Ddpg(a) => {
                    let l = a.critic_update(&batch)?;
                    a.actor_update(&batch)?;
                    a.soft_update_targets()?;
                    l
                }
                Agent::Dqn(a) => a.update(&batch)?,
            };
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("controller parameters after update".into()));
        }
        Ok(Some(total / cfg.updates_per_step as f64))
    }

    /// Reward standardization in use; `None` before the first update.
    pub fn reward_scale(&self) -> Option<RewardScale> {
        match self {
            Agent::Ddpg(a) => a.reward_scale,
            Agent::Dqn(a) => a.reward_scale,
        }
    }

    pub fn end_episode(&mut self, episode: usize) {
        match self {
            Agent::Ddpg(a) => a.end_episode(episode),
            Agent::Dqn(a) => a.end_episode(episode),
        }
    }
}

/// What the environment reports after moving to a new noise state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvFeedback {
    pub reward: f64,
    pub loss: Option<f64>,
}

pub trait Environment {
    fn begin_episode(&mut self, _episode: usize) -> Result<()> {
        Ok(())
    }

    /// Act under the proposed state `next` and report the resulting reward.
    fn step(&mut self, next: &NoiseState) -> Result<EnvFeedback>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSpec {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub initial: NoiseState,
    /// Start every episode from `initial` instead of carrying the last state over.
    pub reset_each_episode: bool,
    pub explore: bool,
    pub learn: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub episode: usize,
    pub step: usize,
    pub state: NoiseState,
    pub action: Action,
    pub next: NoiseState,
    pub reward: f64,
    pub loss: Option<f64>,
    pub critic_loss: Option<f64>,
}

/// Observe, act, step the environment, store the transition, learn.
pub fn run_control_loop(
    agent: &mut Agent,
    buffer: &mut ReplayBuffer,
    env: &mut dyn Environment,
    spec: &LoopSpec,
    rng: &mut Stream,
) -> Result<Vec<StepTrace>> {
    if !spec.initial.is_valid() {
        return Err(Error::invalid(format!("invalid initial noise state {:?}", spec.initial)));
    }
    let mut trace = Vec::with_capacity(spec.episodes * spec.steps_per_episode);
    let mut s = spec.initial;
    for episode in 0..spec.episodes {
        if spec.reset_each_episode {
            s = spec.initial;
        }
        env.begin_episode(episode)?;
        for step in 0..spec.steps_per_episode {
            let action = if spec.explore && buffer.inserted() < agent.config().random_steps as u64 {
                uniform_action(agent.config().action_bound, rng)
            } else {
                agent.act(&s, spec.explore, rng)?
            };
            let next = apply_action(&s, action);
            let fb = env.step(&next)?;
            if !fb.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward at episode {episode}, step {step}")));
            }
            buffer.push(Transition { state: s, action, reward: fb.reward, next });
            let critic_loss = if spec.learn { agent.learn(buffer, rng)? } else { None };
            trace.push(StepTrace { episode, step, state: s, action, next, reward: fb.reward, loss: fb.loss, critic_loss });
            s = next;
        }
        agent.end_episode(episode);
    }
    Ok(trace)
}

fn uniform_action(bound: f64, rng: &mut Stream) -> Action {
    Action {
        d_mu: rng.random_range(-bound..=bound),
        d_sigma: rng.random_range(-bound..=bound),
    }
}
