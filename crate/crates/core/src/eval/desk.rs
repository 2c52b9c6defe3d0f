//! Small-scale regime comparison: generalization to an unseen domain,
//! robustness to synonym substitution, and sensitivity to training-set size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{split, Corpus, SplitRatios};
use crate::error::{Error, Result};
use crate::perturb::AttackConfig;
use crate::trainer::{train, Regime, TrainConfig};

use super::metrics::{attack_eval, evaluate, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    /// Fractions of the source training split to train on.
    pub fractions: Vec<f64>,
    /// Share of the source corpus held out for in-domain and attack evaluation.
    pub holdout: f64,
    pub split_seed: u64,
    pub attack_ratio: f64,
    /// Template for every run; regime and seed are overwritten.
    pub train: TrainConfig,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            regimes: vec![Regime::Baseline, Regime::Dpnet],
            seeds: (0..5).collect(),
            fractions: vec![1.0, 0.75],
            holdout: 0.2,
            split_seed: 7,
            attack_ratio: 0.2,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskRow {
    pub regime: Regime,
    pub seed: u64,
    pub fraction: f64,
    pub train_size: usize,
    pub target_accuracy: f64,
    pub target_auroc: Option<f64>,
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
}

impl DeskRow {
    pub fn attack_drop(&self) -> f64 {
        self.clean_accuracy - self.attacked_accuracy
    }
}

pub const DESK_HEADER: &str =
    "manifest,regime,seed,fraction,train_size,target_accuracy,target_auroc,clean_accuracy,attacked_accuracy,attack_drop";

/// Train every (regime, seed, fraction) on `source` and evaluate on the
/// held-out source split (clean and attacked) and on `target`.
pub fn run_desk(config: &DeskConfig, source: &Corpus, target: &Corpus) -> Result<Vec<DeskRow>> {
    if config.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::invalid("training fractions must be in (0,1]"));
    }
    if !(config.holdout > 0.0 && config.holdout < 1.0) {
        return Err(Error::invalid("holdout must be in (0,1)"));
    }
    let (train_split, _, test) = split(source, SplitRatios::new(1.0 - config.holdout, 0.0, config.holdout)?, config.split_seed)?;
    let mut rows = Vec::new();
    for &fraction in &config.fractions {
        let subset = if fraction == 1.0 {
            train_split.clone()
        } else {
            split(&train_split, SplitRatios::new(fraction, 0.0, 1.0 - fraction)?, config.split_seed)?.0
        };
        for &regime in &config.regimes {
            for &seed in &config.seeds {
                let cfg = TrainConfig { regime, seed, ..config.train.clone() };
                let ckpt = train(&cfg, &subset)?;
                let model = &ckpt.detector;
                let tgt = evaluate(model, target, DEFAULT_THRESHOLD)?;
                let attack = attack_eval(model, &test, &AttackConfig::synonym(config.attack_ratio, seed))?;
                rows.push(DeskRow {
                    regime,
                    seed,
                    fraction,
                    train_size: subset.len(),
                    target_accuracy: tgt.accuracy,
                    target_auroc: tgt.auroc,
                    clean_accuracy: attack.clean.accuracy,
                    attacked_accuracy: attack.attacked.accuracy,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean of `f` over the rows of one regime at one training fraction.
pub fn desk_mean(rows: &[DeskRow], regime: Regime, fraction: f64, f: impl Fn(&DeskRow) -> f64) -> Option<f64> {
    let picked: Vec<f64> = rows.iter().filter(|r| r.regime == regime && r.fraction == fraction).map(f).collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

pub fn write_desk_csv(manifest: &str, rows: &[DeskRow], out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<desk csv>", e);
    writeln!(out, "{DESK_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            out,
            "{manifest},{},{},{},{},{},{},{},{},{}",
            r.regime,
            r.seed,
            r.fraction,
            r.train_size,
            r.target_accuracy,
            r.target_auroc.map(|a| a.to_string()).unwrap_or_default(),
            r.clean_accuracy,
            r.attacked_accuracy,
            r.attack_drop()
        )
        .map_err(io)?;
    }
    Ok(())
}
