use rand::Rng;

use super::{Action, RewardScale, RlConfig, Transition};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, AdamConfig, Gradients, Mlp};
use crate::perturb::NoiseState;
use crate::rng::Stream;

pub const DQN_ACTIONS: usize = 9;

/// Discrete controller over the grid `{-delta, 0, delta}^2`; action index `i`
/// moves mu by step `i / 3` and sigma by step `i % 3`.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub q: Mlp,
    pub q_target: Mlp,
    opt: Adam,
    config: RlConfig,
    epsilon: f64,
    pub reward_scale: Option<RewardScale>,
}

impl DqnAgent {
    pub fn new(config: RlConfig, rng: &mut Stream) -> Result<Self> {
        config.validate()?;
        let q = Mlp::glorot(&[2, config.hidden, DQN_ACTIONS], &[Activation::Relu, Activation::Linear], rng)?;
        Ok(DqnAgent {
            opt: Adam::new(AdamConfig::with_lr(config.lr_critic, config.lr_decay), &q),
            q_target: q.clone(),
            q,
            epsilon: config.epsilon_start,
            reward_scale: None,
            config,
        })
    }

    pub fn config(&self) -> &RlConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.q_target.is_finite()
    }

    pub fn action(&self, index: usize) -> Action {
        let d = self.config.action_bound;
        let step = [-d, 0.0, d];
        Action { d_mu: step[index / 3], d_sigma: step[index % 3] }
    }

    /// Nearest grid index for a continuous action (used when replaying stored transitions).
    pub fn index_of(&self, a: &Action) -> usize {
        let snap = |v: f64| {
            let r = (v / self.config.action_bound).round();
            (r.clamp(-1.0, 1.0) + 1.0) as usize
        };
        3 * snap(a.d_mu) + snap(a.d_sigma)
    }

    pub fn q_values(&self, s: &NoiseState) -> Result<Vec<f64>> {
        self.q.predict(&s.normalized())
    }

    /// Argmax of Q; ties go to the lowest index.
    pub fn greedy(&self, s: &NoiseState) -> Result<usize> {
        Ok(argmax(&self.q_values(s)?))
    }

    /// Epsilon-greedy index.
    pub fn select(&self, s: &NoiseState, rng: &mut Stream) -> Result<usize> {
        if rng.random::<f64>() < self.epsilon {
            Ok(rng.random_range(0..DQN_ACTIONS))
        } else {
            self.greedy(s)
        }
    }

    /// `r + gamma * max_a Q_target(s', a)`.
    pub fn targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                let q = self.q_target.predict(&t.next.normalized())?;
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(t.reward + self.config.gamma * best)
            })
            .collect()
    }

    /// One Adam step on the squared TD error of the taken actions, then a soft
    /// target update. Returns the pre-step loss.
    pub fn update(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("dqn update needs a non-empty batch"));
        }
        let targets = self.targets(batch)?;
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.q);
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&targets) {
            let cache = self.q.forward(&t.state.normalized())?;
            let k = self.index_of(&t.action);
            let d = cache.output()[k] - y;
            loss += d * d / n;
            let mut g_out = vec![0.0; DQN_ACTIONS];
            g_out[k] = 2.0 * d / n;
            grads.add_scaled(&self.q.backward(&cache, &g_out)?.0, 1.0);
        }
        self.opt.step(&mut self.q, &grads)?;
        soft_update(&self.q, &mut self.q_target, self.config.tau)?;
        Ok(loss)
    }

    pub fn end_episode(&mut self, episode: usize) {
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_floor);
        self.opt.set_epoch((episode + 1) as u32);
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{NoiseBounds, NoiseFamily};
    use crate::rng::substream;

    fn agent() -> DqnAgent {
        DqnAgent::new(RlConfig { hidden: 8, ..RlConfig::default() }, &mut substream(1, "dqn")).unwrap()
    }

    #[test]
    fn action_grid_roundtrips() {
        let ag = agent();
        for i in 0..DQN_ACTIONS {
            assert_eq!(ag.index_of(&ag.action(i)), i);
        }
        assert_eq!(ag.action(4), Action::ZERO);
        assert_eq!(ag.action(0), Action { d_mu: -0.05, d_sigma: -0.05 });
        assert_eq!(ag.action(5), Action { d_mu: 0.0, d_sigma: 0.05 });
    }

    #[test]
    fn greedy_ties_break_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        let mut ag = agent();
        ag.q.params_mut().for_each(|p| *p = 0.0);
        let s = NoiseState::new(0.0, 0.1, NoiseFamily::Gaussian, NoiseBounds::default()).unwrap();
        assert_eq!(ag.greedy(&s).unwrap(), 0);
    }

    #[test]
    fn epsilon_schedule() {
        let mut ag = agent();
        let mut seen = vec![ag.epsilon()];
        for ep in 0..300 {
            ag.end_episode(ep);
            seen.push(ag.epsilon());
        }
        assert_eq!(seen[0], 0.9);
        assert!((seen[1] - 0.882).abs() < 1e-12);
        assert_eq!(*seen.last().unwrap(), 0.05);
        assert!(seen.windows(2).all(|w| w[1] <= w[0]));
    }
}
