use rand_distr::{Distribution, Normal};

use super::{Action, RewardScale, RlConfig, Transition};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, AdamConfig, Gradients, Mlp};
use crate::perturb::NoiseState;
use crate::rng::Stream;

/// Anything that can score a (state, normalized action) pair and differentiate
/// the score with respect to the action.
pub trait ActionValue {
    fn value_and_action_grad(&self, state: [f64; 2], action: [f64; 2]) -> Result<(f64, [f64; 2])>;
}

impl ActionValue for Mlp {
    fn value_and_action_grad(&self, state: [f64; 2], action: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let input = [state[0], state[1], action[0], action[1]];
        let cache = self.forward(&input)?;
        let q = cache.output()[0];
        let (_, grad_in) = self.backward(&cache, &[1.0])?;
        Ok((q, [grad_in[2], grad_in[3]]))
    }
}

impl<F> ActionValue for F
where
    F: Fn([f64; 2], [f64; 2]) -> (f64, [f64; 2]),
{
    fn value_and_action_grad(&self, state: [f64; 2], action: [f64; 2]) -> Result<(f64, [f64; 2])> {
        Ok(self(state, action))
    }
}

/// Deterministic actor-critic with target networks.
///
/// The actor emits `tanh` outputs in [-1, 1] which are scaled by the action
/// bound; the critic sees the normalized state and the unscaled actor output.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    config: RlConfig,
    explore_std: f64,
    pub reward_scale: Option<RewardScale>,
}

impl DdpgAgent {
    pub fn new(config: RlConfig, rng: &mut Stream) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let actor = Mlp::glorot(
            &[2, h, h, 2],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
            rng,
        )?;
        let critic = Mlp::glorot(
            &[4, h, h, 1],
            &[Activation::Relu, Activation::Relu, Activation::Linear],
            rng,
        )?;
        Ok(DdpgAgent {
            actor_opt: Adam::new(AdamConfig::with_lr(config.lr_actor, config.lr_decay), &actor),
            critic_opt: Adam::new(AdamConfig::with_lr(config.lr_critic, config.lr_decay), &critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            explore_std: config.explore_std,
            reward_scale: None,
            config,
        })
    }

    pub fn config(&self) -> &RlConfig {
        &self.config
    }

    pub fn explore_std(&self) -> f64 {
        self.explore_std
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite() && self.target_actor.is_finite() && self.target_critic.is_finite()
    }

    fn act_normalized(net: &Mlp, s: &NoiseState) -> Result<[f64; 2]> {
        let out = net.predict(&s.normalized())?;
        Ok([out[0], out[1]])
    }

    fn q(net: &Mlp, s: &NoiseState, a_norm: [f64; 2]) -> Result<f64> {
        let n = s.normalized();
        Ok(net.predict(&[n[0], n[1], a_norm[0], a_norm[1]])?[0])
    }

    fn to_norm(&self, a: &Action) -> [f64; 2] {
        [a.d_mu / self.config.action_bound, a.d_sigma / self.config.action_bound]
    }

    /// Policy action, plus Gaussian exploration noise when `explore` is set,
    /// clipped to the action bound.
    pub fn select_action(&self, s: &NoiseState, explore: bool, rng: &mut Stream) -> Result<Action> {
        let out = Self::act_normalized(&self.actor, s)?;
        let b = self.config.action_bound;
        let mut a = Action { d_mu: b * out[0], d_sigma: b * out[1] };
        if explore && self.explore_std > 0.0 {
            let dist = Normal::new(0.0, self.explore_std).map_err(|e| Error::invalid(e.to_string()))?;
            a.d_mu += dist.sample(rng);
            a.d_sigma += dist.sample(rng);
        }
        Ok(a.clipped(b))
    }

    /// Critic's estimate for an explicit action.
    pub fn q_value(&self, s: &NoiseState, a: &Action) -> Result<f64> {
        Self::q(&self.critic, s, self.to_norm(a))
    }

    /// `r + gamma * Q'(s', mu'(s'))` for every transition.
    pub fn bellman_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                let a_next = Self::act_normalized(&self.target_actor, &t.next)?;
                let q_next = Self::q(&self.target_critic, &t.next, a_next)?;
                Ok(t.reward + self.config.gamma * q_next)
            })
            .collect()
    }

    pub fn critic_loss(&self, batch: &[Transition], targets: &[f64]) -> Result<f64> {
        check_batch(batch, targets)?;
        let mut total = 0.0;
        for (t, y) in batch.iter().zip(targets) {
            let d = self.q_value(&t.state, &t.action)? - y;
            total += d * d;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean squared Bellman error against fixed `targets` and its gradient
    /// with respect to the critic parameters.
    pub fn critic_loss_and_grad(&self, batch: &[Transition], targets: &[f64]) -> Result<(f64, Gradients)> {
        check_batch(batch, targets)?;
        let mut grads = Gradients::zeros_like(&self.critic);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(targets) {
            let s = t.state.normalized();
            let a = self.to_norm(&t.action);
            let cache = self.critic.forward(&[s[0], s[1], a[0], a[1]])?;
            let d = cache.output()[0] - y;
            loss += d * d / n;
            let (g, _) = self.critic.backward(&cache, &[2.0 * d / n])?;
            grads.add_scaled(&g, 1.0);
        }
        Ok((loss, grads))
    }

    /// One Adam step on the mean squared Bellman error; returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = self.bellman_targets(batch)?;
        let (loss, grads) = self.critic_loss_and_grad(batch, &targets)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// One Adam step maximizing the critic's value of the policy's own actions.
    /// Returns the pre-step objective `-mean Q(s, mu(s))`.
    pub fn actor_update(&mut self, batch: &[Transition]) -> Result<f64> {
        let states: Vec<NoiseState> = batch.iter().map(|t| t.state).collect();
        let critic = self.critic.clone();
        policy_gradient_step(&mut self.actor, &mut self.actor_opt, &states, &critic)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        soft_update(&self.actor, &mut self.target_actor, self.config.tau)?;
        soft_update(&self.critic, &mut self.target_critic, self.config.tau)
    }

    /// Decay exploration and move both optimizers to the next epoch's learning rate.
    pub fn end_episode(&mut self, episode: usize) {
        self.explore_std *= self.config.explore_decay;
        let epoch = (episode + 1) as u32;
        self.actor_opt.set_epoch(epoch);
        self.critic_opt.set_epoch(epoch);
    }
}

/// Actor objective `-mean Q(s, mu(s))` and its gradient with respect to the
/// actor parameters, the critic held fixed.
pub fn actor_objective_and_grad(actor: &Mlp, states: &[NoiseState], critic: &dyn ActionValue) -> Result<(f64, Gradients)> {
    if states.is_empty() {
        return Err(Error::invalid("actor update needs a non-empty batch"));
    }
    let n = states.len() as f64;
    let mut grads = Gradients::zeros_like(actor);
    let mut objective = 0.0;
    for s in states {
        let sn = s.normalized();
        let cache = actor.forward(&sn)?;
        let a = [cache.output()[0], cache.output()[1]];
        let (q, dq_da) = critic.value_and_action_grad(sn, a)?;
        objective -= q / n;
        let (g, _) = actor.backward(&cache, &[-dq_da[0] / n, -dq_da[1] / n])?;
        grads.add_scaled(&g, 1.0);
    }
    Ok((objective, grads))
}

/// Deterministic policy gradient: back-propagate `-dQ/da` through the actor
/// (critic held fixed) and take one optimizer step.
pub fn policy_gradient_step(
    actor: &mut Mlp,
    opt: &mut Adam,
    states: &[NoiseState],
    critic: &dyn ActionValue,
) -> Result<f64> {
    let (objective, grads) = actor_objective_and_grad(actor, states, critic)?;
    opt.step(actor, &grads)?;
    Ok(objective)
}

fn check_batch(batch: &[Transition], targets: &[f64]) -> Result<()> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::Dimension(format!("{} transitions vs {} targets", batch.len(), targets.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_differences, max_relative_error};
    use crate::perturb::{NoiseBounds, NoiseFamily};
    use crate::rng::substream;

    fn state(mu: f64, sigma: f64) -> NoiseState {
        NoiseState::new(mu, sigma, NoiseFamily::Gaussian, NoiseBounds::default()).unwrap()
    }

    fn agent(seed: u64) -> DdpgAgent {
        DdpgAgent::new(RlConfig { hidden: 16, ..RlConfig::default() }, &mut substream(seed, "ddpg")).unwrap()
    }

    fn batch() -> Vec<Transition> {
        (0..6)
            .map(|i| {
                let s = state(-0.3 + 0.1 * i as f64, 0.1 + 0.05 * i as f64);
                let a = Action { d_mu: 0.01 * (i as f64 - 3.0), d_sigma: -0.005 * i as f64 };
                Transition { state: s, action: a, reward: 0.5 * i as f64, next: crate::rl::apply_action(&s, a) }
            })
            .collect()
    }

    #[test]
    fn actions_respect_the_bound() {
        let ag = agent(3);
        let mut rng = substream(3, "explore");
        let mut wide = ag.clone();
        wide.explore_std = 1.0;
        for b in batch() {
            assert!(ag.select_action(&b.state, false, &mut rng).unwrap().within(0.05));
            assert!(wide.select_action(&b.state, true, &mut rng).unwrap().within(0.05));
        }
    }

    #[test]
    fn bellman_targets_match_hand_computation() {
        let ag = agent(5);
        let b = batch();
        let y = ag.bellman_targets(&b).unwrap();
        for (t, yi) in b.iter().zip(&y) {
            let a = ag.target_actor.predict(&t.next.normalized()).unwrap();
            let n = t.next.normalized();
            let q = ag.target_critic.predict(&[n[0], n[1], a[0], a[1]]).unwrap()[0];
            assert!((yi - (t.reward + 0.99 * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let ag = agent(7);
        let b = batch();
        let y = ag.bellman_targets(&b).unwrap();
        let mut grads = Gradients::zeros_like(&ag.critic);
        let n = b.len() as f64;
        for (t, yi) in b.iter().zip(&y) {
            let s = t.state.normalized();
            let a = ag.to_norm(&t.action);
            let cache = ag.critic.forward(&[s[0], s[1], a[0], a[1]]).unwrap();
            let d = cache.output()[0] - yi;
            grads.add_scaled(&ag.critic.backward(&cache, &[2.0 * d / n]).unwrap().0, 1.0);
        }
        let x0 = ag.critic.flatten();
        let numeric = central_differences(
            |x| {
                let mut probe = ag.clone();
                probe.critic.assign_flat(x).unwrap();
                probe.critic_loss(&b, &y).unwrap()
            },
            &x0,
            1e-6,
        );
        assert!(max_relative_error(&grads.flatten(), &numeric, 1e-6) < 1e-4);
    }

    #[test]
    fn constant_critic_gives_zero_actor_gradient() {
        let mut ag = agent(11);
        for w in ag.critic.layers_mut()[0].weights.chunks_mut(4) {
            w[2] = 0.0;
            w[3] = 0.0;
        }
        let before = ag.actor.flatten();
        ag.actor_update(&batch()).unwrap();
        assert_eq!(ag.actor.flatten(), before);
    }

    #[test]
    fn actor_climbs_a_quadratic_critic() {
        let mut rng = substream(13, "actor");
        let mut actor = Mlp::glorot(&[2, 16, 16, 2], &[Activation::Relu, Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(3e-3, 1.0), &actor);
        let critic = |_s: [f64; 2], a: [f64; 2]| {
            let q = -(a[0] - 0.3).powi(2);
            (q, [-2.0 * (a[0] - 0.3), 0.0])
        };
        let states: Vec<NoiseState> = batch().iter().map(|t| t.state).collect();
        let mut objectives = Vec::new();
        for _ in 0..200 {
            objectives.push(-policy_gradient_step(&mut actor, &mut opt, &states, &critic).unwrap());
        }
        let checkpoints: Vec<f64> = objectives.iter().step_by(20).copied().collect();
        assert!(checkpoints.windows(2).all(|w| w[1] >= w[0]), "{checkpoints:?}");
        for s in &states {
            let a = actor.predict(&s.normalized()).unwrap()[0];
            assert!((a - 0.3).abs() < 0.05, "actor output {a}");
        }
    }

    #[test]
    fn soft_update_and_episode_decay() {
        let mut ag = agent(17);
        ag.actor.params_mut().for_each(|p| *p += 1.0);
        let before = ag.target_actor.flatten();
        ag.soft_update_targets().unwrap();
        for (t, b) in ag.target_actor.flatten().iter().zip(before) {
            assert!((t - (b + 0.005)).abs() < 1e-12);
        }
        ag.end_episode(0);
        assert!((ag.explore_std() - 0.0099).abs() < 1e-15);
    }
}
