#![allow(dead_code)]

use perturb_detect::corpus::{synth_corpus, Corpus, SynthSpec};
use perturb_detect::featurizer::FeaturizerConfig;
use perturb_detect::trainer::{Regime, TrainConfig};

pub fn tiny_corpora() -> (Corpus, Corpus) {
    let spec = SynthSpec { samples_per_class: 24, min_len: 8, max_len: 16, ..SynthSpec::bundled() };
    let mut all = synth_corpus(&spec).unwrap();
    (all.remove("source").unwrap(), all.remove("target").unwrap())
}

pub fn tiny_config(regime: Regime, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        regime,
        seed,
        max_episode: 3,
        max_step: 4,
        batch_budget: 16,
        hidden: 16,
        repr_dim: 8,
        featurizer: FeaturizerConfig { embed_dim: 16, table_size: 4096, ..FeaturizerConfig::default() },
        ..TrainConfig::default()
    };
    cfg.rl.hidden = 16;
    cfg.rl.batch_size = 4;
    cfg.rl.warmup = 4;
    cfg
}
