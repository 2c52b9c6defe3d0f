//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file, `--set`
//! overrides, then dedicated flags such as `--seed` and `--regime`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::FeatureSpace;
use crate::perturb::{AttackKind, NoiseFamily, ParaphraseRates};
use crate::rl::ControllerKind;
use crate::trainer::{Regime, TrainConfig};

/// Everything a command can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub threshold: f64,
    pub attack_kind: AttackKind,
    pub attack_ratio: f64,
    pub paraphrase: ParaphraseRates,
    /// Path to a synonym lexicon JSON file; empty selects the bundled one.
    pub lexicon: String,
    pub shift_space: FeatureSpace,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            threshold: 0.5,
            attack_kind: AttackKind::Synonym,
            attack_ratio: 0.2,
            paraphrase: ParaphraseRates::default(),
            lexicon: String::new(),
            shift_space: FeatureSpace::Extractor,
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
via_fromstr!(f64, usize, u64, bool, String);

macro_rules! named_enum {
    ($t:ty { $($variant:path => $name:literal),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                match self { $($variant => $name.to_string()),* }
            }
        }
    };
}
named_enum!(Regime { Regime::Dpnet => "dpnet", Regime::Baseline => "baseline", Regime::FixedNoise => "fixed_noise", Regime::TwoStep => "two_step" });
named_enum!(ControllerKind { ControllerKind::Ddpg => "ddpg", ControllerKind::Dqn => "dqn" });
named_enum!(NoiseFamily { NoiseFamily::Gaussian => "gaussian", NoiseFamily::Uniform => "uniform" });
named_enum!(AttackKind { AttackKind::Synonym => "synonym", AttackKind::ParaphraseSurrogate => "paraphrase" });
named_enum!(FeatureSpace { FeatureSpace::Extractor => "extractor", FeatureSpace::Pooled => "pooled" });

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+ : $doc:literal,)*) => {
        /// Every accepted key with a one-line description.
        pub const KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl RunConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$($field).+ = ConfigValue::parse_value(value)
                            .map_err(|e| Error::invalid(format!("bad value {value:?} for key {key:?}: {e}")))?;
                    })*
                    _ => return Err(unknown_key(key)),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.render()),)*
                    _ => None,
                }
            }
        }
    };
}

config_keys! {
    "seed" => train.seed: "root seed; every component draws from a named substream of it",
    "regime" => train.regime: "dpnet | baseline | fixed_noise | two_step",
    "controller" => train.controller: "ddpg | dqn",
    "max_episode" => train.max_episode: "training episodes",
    "max_step" => train.max_step: "control steps per episode",
    "batch_budget" => train.batch_budget: "samples per control step (0 = one full pass)",
    "lambda1" => train.loss_weights.lambda1: "weight of the clean classification loss",
    "lambda2" => train.loss_weights.lambda2: "weight of the noisy classification loss",
    "lambda3" => train.loss_weights.lambda3: "weight of the clean/noisy representation distance",
    "reward_threshold" => train.reward_threshold: "loss pivot of the reward",
    "noise_family" => train.noise_family: "gaussian | uniform",
    "mu_lo" => train.noise_bounds.mu_lo: "lower bound of the noise mean",
    "mu_hi" => train.noise_bounds.mu_hi: "upper bound of the noise mean",
    "sigma_lo" => train.noise_bounds.sigma_lo: "lower bound of the noise std",
    "sigma_hi" => train.noise_bounds.sigma_hi: "upper bound of the noise std",
    "initial_mu" => train.initial_mu: "initial noise mean",
    "initial_sigma" => train.initial_sigma: "initial noise std",
    "reset_state_each_episode" => train.reset_state_each_episode: "restart every episode from the initial noise state",
    "lr_encoder" => train.lr_encoder: "detector learning rate",
    "lr_decay" => train.lr_decay: "per-episode learning-rate decay factor (all optimizers)",
    "hidden" => train.hidden: "detector extractor hidden width",
    "repr_dim" => train.repr_dim: "detector representation size",
    "embed_dim" => train.featurizer.embed_dim: "embedding width of the frozen featurizer",
    "max_tokens" => train.featurizer.max_tokens: "tokens kept per text",
    "hash_seed" => train.featurizer.hash_seed: "featurizer hashing and table seed",
    "table_size" => train.featurizer.table_size: "featurizer hash buckets",
    "rl_gamma" => train.rl.gamma: "discount factor",
    "rl_tau" => train.rl.tau: "target-network soft-update rate",
    "rl_action_bound" => train.rl.action_bound: "largest change of mu or sigma per step",
    "rl_explore_std" => train.rl.explore_std: "std of Gaussian exploration noise on actions",
    "rl_explore_decay" => train.rl.explore_decay: "per-episode decay of the exploration std",
    "rl_batch_size" => train.rl.batch_size: "replay minibatch size",
    "rl_buffer_capacity" => train.rl.buffer_capacity: "replay ring capacity",
    "rl_warmup" => train.rl.warmup: "transitions stored before updates start",
    "rl_random_steps" => train.rl.random_steps: "initial steps with uniformly random actions",
    "rl_updates_per_step" => train.rl.updates_per_step: "controller updates per control step",
    "rl_hidden" => train.rl.hidden: "controller hidden width",
    "lr_actor" => train.rl.lr_actor: "actor learning rate",
    "lr_critic" => train.rl.lr_critic: "critic (and Q-network) learning rate",
    "dqn_epsilon_start" => train.rl.epsilon_start: "initial epsilon of the DQN controller",
    "dqn_epsilon_decay" => train.rl.epsilon_decay: "per-episode epsilon decay",
    "dqn_epsilon_floor" => train.rl.epsilon_floor: "smallest epsilon",
    "rl_normalize_rewards" => train.rl.normalize_rewards: "standardize rewards with statistics frozen at the first update",
    "threshold" => threshold: "class-1 decision threshold for evaluation",
    "attack" => attack_kind: "synonym | paraphrase",
    "attack_ratio" => attack_ratio: "fraction of attackable words replaced by the synonym attack",
    "paraphrase_synonym_ratio" => paraphrase.synonym_ratio: "synonym fraction inside the paraphrase surrogate",
    "paraphrase_delete_rate" => paraphrase.delete_rate: "token deletion rate of the paraphrase surrogate",
    "paraphrase_swap_rate" => paraphrase.swap_rate: "fraction of 3-token windows shuffled by the paraphrase surrogate",
    "lexicon" => lexicon: "synonym lexicon JSON path (empty = bundled)",
    "shift_space" => shift_space: "extractor | pooled features for KL shift",
}

fn unknown_key(key: &str) -> Error {
    let valid: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
    Error::invalid(format!("unknown key {key:?}; valid keys: {}", valid.join(", ")))
}

/// `key = value` lines with `#` comments; duplicate keys are rejected.
pub fn parse_kv(content: &str) -> Result<Vec<(usize, String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Record {
            line: line_no,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Record { line: line_no, message: "empty key".into() });
        }
        if let Some(prev) = seen.insert(k.clone(), line_no) {
            return Err(Error::Record { line: line_no, message: format!("key {k:?} already set at line {prev}") });
        }
        out.push((line_no, k, v));
    }
    Ok(out)
}

impl RunConfig {
    pub fn apply_text(&mut self, content: &str) -> Result<()> {
        for (line, k, v) in parse_kv(content)? {
            self.set(&k, &v).map_err(|e| Error::Record { line, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&content)
    }

    /// `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// All keys with their current values, sorted by key.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|(k, _)| (k.to_string(), self.get(k).expect("every listed key is gettable")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0,1]", self.threshold)));
        }
        Ok(())
    }

    /// Renders the full configuration as a config file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{k} = {}\n", self.get(k).expect("listed key")));
        }
        out
    }
}
