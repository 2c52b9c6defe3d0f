use serde::{Deserialize, Serialize};

use crate::detector::LossWeights;
use crate::error::{Error, Result};
use crate::featurizer::FeaturizerConfig;
use crate::perturb::{NoiseBounds, NoiseFamily, NoiseState};
use crate::rl::{ControllerKind, RlConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Detector and noise controller trained jointly.
    Dpnet,
    /// Clean embeddings only, classification loss only.
    Baseline,
    /// Noise-enhanced training at the initial noise state, no controller.
    FixedNoise,
    /// Controller search against a frozen detector, then fixed-noise training at the best state found.
    TwoStep,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Dpnet, Regime::Baseline, Regime::FixedNoise, Regime::TwoStep];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Dpnet => "dpnet",
            Regime::Baseline => "baseline",
            Regime::FixedNoise => "fixed_noise",
            Regime::TwoStep => "two_step",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown regime {s:?} (valid: dpnet, baseline, fixed_noise, two_step)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub controller: ControllerKind,
    pub seed: u64,
    pub max_episode: usize,
    pub max_step: usize,
    /// Samples processed per control step; 0 means one full pass over the corpus.
    pub batch_budget: usize,
    pub loss_weights: LossWeights,
    pub reward_threshold: f64,
    pub noise_family: NoiseFamily,
    pub noise_bounds: NoiseBounds,
    pub initial_mu: f64,
    pub initial_sigma: f64,
    pub reset_state_each_episode: bool,
    pub lr_encoder: f64,
    pub lr_decay: f64,
    pub hidden: usize,
    pub repr_dim: usize,
    pub featurizer: FeaturizerConfig,
    pub rl: RlConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Dpnet,
            controller: ControllerKind::Ddpg,
            seed: 0,
            max_episode: 30,
            max_step: 10,
            batch_budget: 0,
            loss_weights: LossWeights::default(),
            reward_threshold: 1.0,
            noise_family: NoiseFamily::Gaussian,
            noise_bounds: NoiseBounds::default(),
            initial_mu: 0.0,
            initial_sigma: 0.1,
            reset_state_each_episode: true,
            lr_encoder: 8e-5,
            lr_decay: 0.995,
            hidden: 64,
            repr_dim: 32,
            featurizer: FeaturizerConfig::default(),
            rl: RlConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_episode == 0 || self.max_step == 0 {
            return Err(Error::invalid("max_episode and max_step must be positive"));
        }
        if !(self.lr_encoder > 0.0 && self.lr_encoder.is_finite()) {
            return Err(Error::invalid("lr_encoder must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must be in (0,1]"));
        }
        if !self.reward_threshold.is_finite() {
            return Err(Error::invalid("reward_threshold must be finite"));
        }
        if self.hidden == 0 || self.repr_dim == 0 {
            return Err(Error::invalid("hidden and repr_dim must be positive"));
        }
        self.loss_weights.validate()?;
        self.featurizer.validate()?;
        self.rl.validate()?;
        self.initial_state().map(|_| ())
    }

    pub fn initial_state(&self) -> Result<NoiseState> {
        NoiseState::new(self.initial_mu, self.initial_sigma, self.noise_family, self.noise_bounds)
    }
}
