use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{NoiseBounds, NoiseFamily, NoiseState};
use crate::rl::{run_control_loop, Agent, ControllerKind, EnvFeedback, Environment, LoopSpec, ReplayBuffer, RlConfig, StepTrace, REWARD_MAX};
use crate::rng::substream;

/// Detector-free environment with a planted optimum:
/// `reward(s) = R_max - (sigma - sigma*)^2 - (mu - mu*)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEnv {
    pub mu_star: f64,
    pub sigma_star: f64,
    pub r_max: f64,
}

impl SyntheticEnv {
    pub fn new(mu_star: f64, sigma_star: f64, bounds: &NoiseBounds) -> Result<Self> {
        if !(bounds.mu_lo..=bounds.mu_hi).contains(&mu_star) || !(bounds.sigma_lo..=bounds.sigma_hi).contains(&sigma_star) {
            return Err(Error::invalid(format!("optimum ({mu_star}, {sigma_star}) outside the noise bounds")));
        }
        Ok(SyntheticEnv { mu_star, sigma_star, r_max: REWARD_MAX })
    }

    pub fn reward_at(&self, s: &NoiseState) -> f64 {
        self.r_max - (s.sigma - self.sigma_star).powi(2) - (s.mu - self.mu_star).powi(2)
    }

    pub fn distance(&self, s: &NoiseState) -> f64 {
        ((s.sigma - self.sigma_star).powi(2) + (s.mu - self.mu_star).powi(2)).sqrt()
    }
}

impl Environment for SyntheticEnv {
    fn step(&mut self, next: &NoiseState) -> Result<EnvFeedback> {
        Ok(EnvFeedback { reward: self.reward_at(next), loss: None })
    }
}

/// Settings for validating a controller on [`SyntheticEnv`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvBenchConfig {
    pub mu_star: f64,
    pub sigma_star: f64,
    pub steps: usize,
    pub steps_per_episode: usize,
    pub tail: usize,
    pub rl: RlConfig,
}

impl Default for EnvBenchConfig {
    fn default() -> Self {
        EnvBenchConfig {
            mu_star: 0.0,
            sigma_star: 0.5,
            steps: 300,
            steps_per_episode: 1,
            tail: 100,
            rl: RlConfig {
                lr_actor: 3e-3,
                lr_critic: 3e-3,
                updates_per_step: 4,
                random_steps: 64,
                tau: 0.02,
                ..RlConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvBenchResult {
    pub kind: ControllerKind,
    pub seed: u64,
    pub final_state: NoiseState,
    pub final_distance: f64,
    pub tail_reward_variance: f64,
    pub trace: Vec<StepTrace>,
}

pub fn run_env_bench(kind: ControllerKind, cfg: &EnvBenchConfig, seed: u64) -> Result<EnvBenchResult> {
    if cfg.steps == 0 || cfg.steps_per_episode == 0 || !cfg.steps.is_multiple_of(cfg.steps_per_episode) {
        return Err(Error::invalid("steps must be a positive multiple of steps_per_episode"));
    }
    if cfg.tail == 0 || cfg.tail > cfg.steps {
        return Err(Error::invalid("tail must be in 1..=steps"));
    }
    let bounds = NoiseBounds::default();
    let mut env = SyntheticEnv::new(cfg.mu_star, cfg.sigma_star, &bounds)?;
    let initial = NoiseState::new(0.0, 0.1, NoiseFamily::Gaussian, bounds)?;
    let mut agent = Agent::new(kind, cfg.rl, &mut substream(seed, "agent/init"))?;
    let mut buffer = ReplayBuffer::new(cfg.rl.buffer_capacity);
    let spec = LoopSpec {
        episodes: cfg.steps / cfg.steps_per_episode,
        steps_per_episode: cfg.steps_per_episode,
        initial,
        reset_each_episode: false,
        explore: true,
        learn: true,
    };
    let trace = run_control_loop(&mut agent, &mut buffer, &mut env, &spec, &mut substream(seed, "agent/explore"))?;
    let final_state = trace.last().map(|t| t.next).unwrap_or(initial);
    let tail: Vec<f64> = trace[trace.len() - cfg.tail..].iter().map(|t| t.reward).collect();
    Ok(EnvBenchResult {
        kind,
        seed,
        final_distance: env.distance(&final_state),
        final_state,
        tail_reward_variance: population_variance(&tail),
        trace,
    })
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}
