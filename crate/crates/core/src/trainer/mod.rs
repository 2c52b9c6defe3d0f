//! Training regimes: joint detector/controller training, the clean baseline,
//! fixed-noise training, and the two-phase variant; plus checkpoint I/O.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, AgentParams, Checkpoint, CHECKPOINT_VERSION};
pub use config::{Regime, TrainConfig};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::detector::{grad_pooled, DetectorModel, LossWeights};
use crate::error::{Error, Result};
use crate::featurizer::{EmbeddingMatrix, Featurizer};
use crate::nn::{Adam, AdamConfig};
use crate::perturb::{inject, sample_noise, NoiseState};
use crate::rl::{reward, run_control_loop, Agent, EnvFeedback, Environment, LoopSpec, ReplayBuffer, StepTrace};
use crate::rng::{indexed_substream, substream, Stream};

/// One control step of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// 1 for the search phase of the two-step regime, 2 for its training phase, 0 otherwise.
    pub phase: u8,
    pub episode: usize,
    pub step: usize,
    /// Noise state the step's samples were perturbed with; `None` without noise.
    pub noise: Option<[f64; 2]>,
    /// Controller action leading to `noise`; `None` when no transition was stored.
    pub action: Option<[f64; 2]>,
    pub reward: Option<f64>,
    pub mean_loss: f64,
}

pub const HISTORY_HEADER: &str = "phase,episode,step,mu,sigma,d_mu,d_sigma,reward,mean_loss";

pub fn write_history_csv(history: &[HistoryRow], out: &mut dyn Write) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let io = |e| Error::io("history csv", e);
    writeln!(out, "{HISTORY_HEADER}").map_err(io)?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.phase,
            r.episode,
            r.step,
            opt(r.noise.map(|n| n[0])),
            opt(r.noise.map(|n| n[1])),
            opt(r.action.map(|a| a[0])),
            opt(r.action.map(|a| a[1])),
            opt(r.reward),
            r.mean_loss
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn save_history_csv(history: &[HistoryRow], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_history_csv(history, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Dispatch on `config.regime`.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<Checkpoint> {
    match config.regime {
        Regime::Dpnet => train_dpnet(config, corpus),
        Regime::Baseline => train_baseline(config, corpus),
        Regime::FixedNoise => train_fixed_noise(config, corpus),
        Regime::TwoStep => train_two_step(config, corpus),
    }
}

pub fn train_dpnet(config: &TrainConfig, corpus: &Corpus) -> Result<Checkpoint> {
    let config = with_regime(config, Regime::Dpnet)?;
    let mut env = DetectorEnv::new(&config, corpus, Mode::Noisy, true)?;
    let mut agent = Agent::new(config.controller, config.rl, &mut substream(config.seed, "agent/init"))?;
    let trace = control(&config, &mut agent, &mut env)?;
    let history = merge_trace(0, &trace, &env.step_losses);
    let final_state = trace.last().map(|t| t.next).unwrap_or(config.initial_state()?);
    env.finish(config, Some(&agent), final_state, history)
}

pub fn train_baseline(config: &TrainConfig, corpus: &Corpus) -> Result<Checkpoint> {
    let config = with_regime(config, Regime::Baseline)?;
    let mut env = DetectorEnv::new(&config, corpus, Mode::Clean, true)?;
    let state = config.initial_state()?;
    let history = fixed_loop(&config, &mut env, &state, 0, false)?;
    env.finish(config, None, state, history)
}

pub fn train_fixed_noise(config: &TrainConfig, corpus: &Corpus) -> Result<Checkpoint> {
    let config = with_regime(config, Regime::FixedNoise)?;
    let state = config.initial_state()?;
    let mut env = DetectorEnv::new(&config, corpus, Mode::Noisy, true)?;
    let history = fixed_loop(&config, &mut env, &state, 0, true)?;
    env.finish(config, None, state, history)
}

pub fn train_two_step(config: &TrainConfig, corpus: &Corpus) -> Result<Checkpoint> {
    let config = with_regime(config, Regime::TwoStep)?;
    let mut search_env = DetectorEnv::new(&config, corpus, Mode::Noisy, false)?;
    let mut agent = Agent::new(config.controller, config.rl, &mut substream(config.seed, "agent/init"))?;
    let trace = control(&config, &mut agent, &mut search_env)?;
    let best = best_state(&trace).ok_or_else(|| Error::invalid("search phase produced no steps"))?;
    let mut history = merge_trace(1, &trace, &search_env.step_losses);

    let mut env = DetectorEnv::new(&config, corpus, Mode::Noisy, true)?;
    history.extend(fixed_loop(&config, &mut env, &best, 2, true)?);
    env.finish(config, Some(&agent), best, history)
}

/// Next state of the highest-reward step; ties go to the earliest.
pub fn best_state(trace: &[StepTrace]) -> Option<NoiseState> {
    let mut best: Option<&StepTrace> = None;
    for t in trace {
        if best.is_none_or(|b| t.reward > b.reward) {
            best = Some(t);
        }
    }
    best.map(|t| t.next)
}

fn with_regime(config: &TrainConfig, regime: Regime) -> Result<TrainConfig> {
    config.validate()?;
    Ok(TrainConfig { regime, ..config.clone() })
}

fn control(config: &TrainConfig, agent: &mut Agent, env: &mut DetectorEnv) -> Result<Vec<StepTrace>> {
    let mut buffer = ReplayBuffer::new(config.rl.buffer_capacity);
    let spec = LoopSpec {
        episodes: config.max_episode,
        steps_per_episode: config.max_step,
        initial: config.initial_state()?,
        reset_each_episode: config.reset_state_each_episode,
        explore: true,
        learn: true,
    };
    run_control_loop(agent, &mut buffer, env, &spec, &mut substream(config.seed, "agent/explore"))
}

fn fixed_loop(config: &TrainConfig, env: &mut DetectorEnv, state: &NoiseState, phase: u8, noisy: bool) -> Result<Vec<HistoryRow>> {
    let mut rows = Vec::with_capacity(config.max_episode * config.max_step);
    for episode in 0..config.max_episode {
        env.begin_episode(episode)?;
        for step in 0..config.max_step {
            let fb = env.step(state)?;
            rows.push(HistoryRow {
                phase,
                episode,
                step,
                noise: noisy.then_some([state.mu, state.sigma]),
                action: None,
                reward: noisy.then_some(fb.reward),
                mean_loss: fb.loss.unwrap_or_default(),
            });
        }
    }
    Ok(rows)
}

fn merge_trace(phase: u8, trace: &[StepTrace], losses: &[f64]) -> Vec<HistoryRow> {
    trace
        .iter()
        .zip(losses)
        .map(|(t, &loss)| HistoryRow {
            phase,
            episode: t.episode,
            step: t.step,
            noise: Some([t.next.mu, t.next.sigma]),
            action: Some([t.action.d_mu, t.action.d_sigma]),
            reward: Some(t.reward),
            mean_loss: loss,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Clean,
    Noisy,
}

/// The detector as the controller's environment: each step trains (or, when
/// frozen, only evaluates) on the step's samples under fresh noise drawn from
/// the proposed state, and rewards the mean loss.
struct DetectorEnv {
    model: DetectorModel,
    opt_extractor: Adam,
    opt_head: Adam,
    embeddings: Vec<EmbeddingMatrix>,
    labels: Vec<u8>,
    weights: LossWeights,
    threshold: f64,
    budget: usize,
    mode: Mode,
    learn: bool,
    checksum: String,
    seed: u64,
    order: Vec<usize>,
    cursor: usize,
    passes: u64,
    noise_rng: Stream,
    step_losses: Vec<f64>,
}

impl DetectorEnv {
    fn new(config: &TrainConfig, corpus: &Corpus, mode: Mode, learn: bool) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid(format!("training corpus {:?} is empty", corpus.name)));
        }
        if !corpus.has_both_classes() {
            return Err(Error::invalid(format!("training corpus {:?} must contain both classes", corpus.name)));
        }
        let featurizer = Featurizer::new(config.featurizer)?;
        let embeddings = corpus
            .samples
            .iter()
            .map(|s| featurizer.embed(&s.text))
            .collect::<Result<Vec<_>>>()?;
        let model = DetectorModel::new(config.featurizer, config.hidden, config.repr_dim, &mut substream(config.seed, "detector/init"))?;
        let adam = AdamConfig::with_lr(config.lr_encoder, config.lr_decay);
        let weights = match mode {
            Mode::Clean => LossWeights { lambda2: 0.0, lambda3: 0.0, ..config.loss_weights },
            Mode::Noisy => config.loss_weights,
        };
        let n = corpus.len();
        Ok(DetectorEnv {
            opt_extractor: Adam::new(adam, &model.extractor),
            opt_head: Adam::new(adam, &model.head),
            model,
            embeddings,
            labels: corpus.samples.iter().map(|s| s.label).collect(),
            weights,
            threshold: config.reward_threshold,
            budget: if config.batch_budget == 0 { n } else { config.batch_budget },
            mode,
            learn,
            checksum: featurizer.checksum().to_string(),
            seed: config.seed,
            order: Vec::new(),
            cursor: n,
            passes: 0,
            noise_rng: substream(config.seed, "noise"),
            step_losses: Vec::new(),
        })
    }

    fn next_index(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..self.embeddings.len()).collect();
            self.order.shuffle(&mut indexed_substream(self.seed, "trainer/order", self.passes));
            self.passes += 1;
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn finish(self, config: TrainConfig, agent: Option<&Agent>, final_state: NoiseState, history: Vec<HistoryRow>) -> Result<Checkpoint> {
        let after = Featurizer::new(config.featurizer)?.recompute_checksum();
        if after != self.checksum {
            return Err(Error::invalid("featurizer table changed during training"));
        }
        Ok(Checkpoint {
            featurizer_checksum: self.checksum,
            detector: self.model,
            agent: agent.map(AgentParams::from_agent),
            final_state,
            history,
            config,
        })
    }
}

impl Environment for DetectorEnv {
    fn begin_episode(&mut self, episode: usize) -> Result<()> {
        self.opt_extractor.set_epoch(episode as u32);
        self.opt_head.set_epoch(episode as u32);
        Ok(())
    }

    fn step(&mut self, next: &NoiseState) -> Result<EnvFeedback> {
        let mut total = 0.0;
        for _ in 0..self.budget {
            let i = self.next_index();
            let e_x = &self.embeddings[i];
            let clean = e_x.mean_pool();
            let noisy = match self.mode {
                Mode::Clean => None,
                Mode::Noisy => {
                    let noise = sample_noise(next, e_x.rows(), e_x.cols(), &mut self.noise_rng)?;
                    Some(inject(e_x, &noise)?.mean_pool())
                }
            };
            let (loss, grads) = grad_pooled(&self.model, &clean, noisy.as_deref(), self.labels[i], &self.weights)?;
            if self.learn {
                self.opt_extractor.step(&mut self.model.extractor, &grads.extractor)?;
                self.opt_head.step(&mut self.model.head, &grads.head)?;
            }
            total += loss.total;
        }
        let mean = total / self.budget as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("mean training loss at step {}", self.step_losses.len())));
        }
        self.step_losses.push(mean);
        Ok(EnvFeedback { reward: reward(mean, self.threshold), loss: Some(mean) })
    }
}
