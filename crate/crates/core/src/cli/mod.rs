//! Command-line front end. Every command writes its outputs plus a
//! `manifest.json` into `--out`, and stamps report rows with the manifest hash.

mod config;
mod manifest;

pub use config::{parse_kv, RunConfig, KEYS};
pub use manifest::{file_digest, sha256_hex, InputDigest, Manifest};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{load_corpus, synth_corpus, write_corpus, Corpus, SynthSpec};
use crate::detector::DetectorModel;
use crate::error::Error;
use crate::eval::{
    attack_eval, cross_domain_eval, export_features, metrics_row, shift_report, timing_bench, ShiftSide, FeatureSpace,
    METRICS_HEADER, TIMING_HEADER,
};
use crate::perturb::{AttackConfig, Lexicon, NoiseState};
use crate::rng::substream;
use crate::trainer::{load_checkpoint, save_checkpoint, save_history_csv, train, Regime};

#[derive(Debug, Parser)]
#[command(name = "perturb-detect", version, about = "Train and evaluate machine-generated text detectors with RL-steered embedding noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key (`key=value`); repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Root seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic multi-domain corpora, one JSONL file per domain.
    Synth {
        /// Synthesis spec (`key = value`); the bundled two-domain spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a detector; writes checkpoint.bin, history.csv and manifest.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training corpus (JSONL).
        #[arg(long)]
        data: PathBuf,
        /// dpnet | baseline | fixed_noise | two_step
        #[arg(long)]
        regime: Option<String>,
        /// ddpg | dqn
        #[arg(long)]
        controller: Option<String>,
    },
    /// Evaluate a checkpoint on target corpora; writes metrics.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated JSONL files; each file stem names a target.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<PathBuf>,
    },
    /// Clean versus attacked metrics; writes attack.csv.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// synonym | paraphrase
        #[arg(long)]
        attack: Option<String>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// KL divergence between corpora (and noisy copies); writes shift.csv.
    Shift {
        #[command(flatten)]
        common: Common,
        /// Detector for extractor features; pooled embeddings are used without it.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Comma-separated JSONL files.
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        /// `mu,sigma` of noise added to each corpus for corpus-vs-noisy pairs.
        #[arg(long)]
        noise: Option<String>,
    },
    /// Inference timing; writes timing.csv.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Cycle the corpus up to this many samples (0 keeps it as is).
        #[arg(long, default_value_t = 0)]
        samples: usize,
    },
    /// Per-sample extractor features; writes features.csv.
    ExportFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

/// Parses arguments and runs the command; errors carry a printable message.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Synth { spec, seed, out } => cmd_synth(spec.as_deref(), seed, &out),
        Command::Train { common, data, regime, controller } => cmd_train(&common, &data, regime.as_deref(), controller.as_deref()),
        Command::Eval { common, ckpt, targets } => cmd_eval(&common, &ckpt, &targets),
        Command::Attack { common, ckpt, data, attack, ratio } => cmd_attack(&common, &ckpt, &data, attack.as_deref(), ratio),
        Command::Shift { common, ckpt, data, noise } => cmd_shift(&common, ckpt.as_deref(), &data, noise.as_deref()),
        Command::Bench { common, ckpt, data, samples } => cmd_bench(&common, &ckpt, &data, samples),
        Command::ExportFeatures { common, ckpt, data } => cmd_export(&common, &ckpt, &data),
    }
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path).with_context(|| format!("reading config {}", path.display()))?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let back = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if back != text {
        bail!("{} did not read back identically", path.display());
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into())
}

/// Loads corpora named by file stem; repeated stems get a `#k` suffix.
fn load_named(paths: &[PathBuf], manifest: &mut Manifest, role: &str) -> anyhow::Result<Vec<(String, Corpus)>> {
    let mut out: Vec<(String, Corpus)> = Vec::new();
    for p in paths {
        let base = stem(p);
        let mut name = base.clone();
        let mut k = 2;
        while out.iter().any(|(n, _)| *n == name) {
            name = format!("{base}#{k}");
            k += 1;
        }
        out.push((name.clone(), load_corpus(p, &name)?));
        manifest.add_input(role, p)?;
    }
    Ok(out)
}

pub fn synth_spec_from_text(content: &str) -> crate::Result<SynthSpec> {
    let mut spec = SynthSpec::bundled();
    let floats = |v: &str| -> std::result::Result<Vec<f64>, String> {
        v.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect()
    };
    for (line, k, v) in parse_kv(content)? {
        let bad = |msg: String| Error::Record { line, message: format!("bad value {v:?} for key {k:?}: {msg}") };
        match k.as_str() {
            "domains" => spec.domains = v.split(',').map(|d| d.trim().to_string()).collect(),
            "vocab_size" => spec.vocab_size = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "zipf_human" => spec.zipf_exponent[0] = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            "zipf_machine" => spec.zipf_exponent[1] = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            "mix_human" => spec.template_mix[0] = floats(&v).map_err(bad)?,
            "mix_machine" => spec.template_mix[1] = floats(&v).map_err(bad)?,
            "samples_per_class" => spec.samples_per_class = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "min_len" => spec.min_len = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "max_len" => spec.max_len = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "seed" => spec.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            other => {
                return Err(Error::Record {
                    line,
                    message: format!(
                        "unknown key {other:?}; valid keys: domains, vocab_size, zipf_human, zipf_machine, mix_human, mix_machine, samples_per_class, min_len, max_len, seed"
                    ),
                })
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(spec_path: Option<&Path>, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            synth_spec_from_text(&text).with_context(|| format!("reading spec {}", p.display()))?
        }
        None => SynthSpec::bundled(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    prepare_out(out)?;
    let corpora = synth_corpus(&spec)?;
    for (domain, corpus) in &corpora {
        let path = out.join(format!("{domain}.jsonl"));
        write_corpus(corpus, &path)?;
        let back = load_corpus(&path, domain)?;
        if back != *corpus {
            bail!("{} did not read back identically", path.display());
        }
        let [h, m] = corpus.class_counts();
        println!("{domain}: {} samples ({h} human, {m} machine) -> {}", corpus.len(), path.display());
    }
    let mut manifest = Manifest::new("synth", spec.seed, BTreeMap::new());
    manifest.config.insert("spec".into(), serde_json::to_string(&spec)?);
    manifest.write(out)?;
    Ok(())
}

fn cmd_train(common: &Common, data: &Path, regime: Option<&str>, controller: Option<&str>) -> anyhow::Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(r) = regime {
        cfg.set("regime", r)?;
    }
    if let Some(c) = controller {
        cfg.set("controller", c)?;
    }
    cfg.validate()?;
    let corpus = load_corpus(data, &stem(data))?;
    let mut manifest = Manifest::new("train", cfg.train.seed, cfg.snapshot());
    manifest.add_input("data", data)?;
    prepare_out(&common.out)?;

    let ckpt = train(&cfg.train, &corpus)?;
    let ckpt_path = common.out.join("checkpoint.bin");
    save_checkpoint(&ckpt, &ckpt_path)?;
    if load_checkpoint(&ckpt_path)? != ckpt {
        bail!("checkpoint {} did not load back identically", ckpt_path.display());
    }
    save_history_csv(&ckpt.history, &common.out.join("history.csv"))?;
    manifest.write(&common.out)?;
    let last = ckpt.history.last().map(|r| r.mean_loss).unwrap_or(f64::NAN);
    println!(
        "trained regime={} steps={} transitions={} final_noise=({}, {}) final_loss={last}",
        ckpt.config.regime,
        ckpt.history.len(),
        ckpt.transition_count(),
        ckpt.final_state.mu,
        ckpt.final_state.sigma
    );
    println!("manifest {}", manifest.short_hash()?);
    Ok(())
}

fn load_model(path: &Path, manifest: &mut Manifest) -> anyhow::Result<DetectorModel> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    manifest.add_input("checkpoint", path)?;
    Ok(ckpt.detector)
}

fn cmd_eval(common: &Common, ckpt: &Path, targets: &[PathBuf]) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    cfg.validate()?;
    let mut manifest = Manifest::new("eval", cfg.train.seed, cfg.snapshot());
    let model = load_model(ckpt, &mut manifest)?;
    let corpora: BTreeMap<String, Corpus> = load_named(targets, &mut manifest, "target")?.into_iter().collect();
    prepare_out(&common.out)?;
    let mut report = cross_domain_eval(&model, &corpora)?;
    if cfg.threshold != crate::eval::DEFAULT_THRESHOLD {
        for (name, m) in report.targets.iter_mut() {
            *m = crate::eval::evaluate(&model, &corpora[name], cfg.threshold)?;
        }
    }
    let hash = manifest.short_hash()?;
    let mut buf = Vec::new();
    report.write_csv(&hash, &mut buf)?;
    write_text(&common.out.join("metrics.csv"), &String::from_utf8(buf)?)?;
    manifest.write(&common.out)?;
    for (name, m) in &report.targets {
        println!("{name}: accuracy {:.4} f1 {:.4} auroc {}", m.accuracy, m.f1, m.auroc.map(|a| format!("{a:.4}")).unwrap_or("-".into()));
    }
    Ok(())
}

fn attack_config(cfg: &RunConfig) -> anyhow::Result<AttackConfig> {
    let lexicon = if cfg.lexicon.is_empty() { Lexicon::bundled() } else { Arc::new(Lexicon::load(&cfg.lexicon)?) };
    let attack = AttackConfig {
        kind: cfg.attack_kind,
        ratio: cfg.attack_ratio,
        lexicon,
        seed: cfg.train.seed,
        paraphrase: cfg.paraphrase,
    };
    attack.validate()?;
    Ok(attack)
}

fn cmd_attack(common: &Common, ckpt: &Path, data: &Path, kind: Option<&str>, ratio: Option<f64>) -> anyhow::Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(k) = kind {
        cfg.set("attack", k)?;
    }
    if let Some(r) = ratio {
        cfg.attack_ratio = r;
    }
    cfg.validate()?;
    let mut manifest = Manifest::new("attack", cfg.train.seed, cfg.snapshot());
    if !cfg.lexicon.is_empty() {
        manifest.add_input("lexicon", Path::new(&cfg.lexicon))?;
    }
    let model = load_model(ckpt, &mut manifest)?;
    let corpus = load_corpus(data, &stem(data))?;
    manifest.add_input("data", data)?;
    prepare_out(&common.out)?;
    let report = attack_eval(&model, &corpus, &attack_config(&cfg)?)?;
    let hash = manifest.short_hash()?;
    let text = format!(
        "{METRICS_HEADER}\n{}\n{}\n",
        metrics_row(&hash, "clean", &report.clean),
        metrics_row(&hash, "attacked", &report.attacked)
    );
    write_text(&common.out.join("attack.csv"), &text)?;
    manifest.write(&common.out)?;
    println!(
        "clean accuracy {:.4}, attacked accuracy {:.4}, drop {:.4}",
        report.clean.accuracy,
        report.attacked.accuracy,
        report.accuracy_drop()
    );
    Ok(())
}

fn parse_noise(spec: &str, cfg: &RunConfig) -> anyhow::Result<NoiseState> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [mu, sigma] = parts.as_slice() else {
        bail!("--noise expects mu,sigma, got {spec:?}");
    };
    let (mu, sigma): (f64, f64) = (mu.parse()?, sigma.parse()?);
    Ok(NoiseState::new(mu, sigma, cfg.train.noise_family, cfg.train.noise_bounds)?)
}

fn cmd_shift(common: &Common, ckpt: Option<&Path>, data: &[PathBuf], noise: Option<&str>) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    cfg.validate()?;
    let mut manifest = Manifest::new("shift", cfg.train.seed, cfg.snapshot());
    let model = match ckpt {
        Some(p) => load_model(p, &mut manifest)?,
        None if cfg.shift_space == FeatureSpace::Pooled => {
            DetectorModel::new(cfg.train.featurizer, cfg.train.hidden, cfg.train.repr_dim, &mut substream(cfg.train.seed, "detector/init"))?
        }
        None => bail!("extractor features need --ckpt (or set shift_space=pooled)"),
    };
    let named = load_named(data, &mut manifest, "data")?;
    let noise = noise.map(|n| parse_noise(n, &cfg)).transpose()?;
    if named.len() < 2 && noise.is_none() {
        bail!("shift needs at least two corpora, or one corpus with --noise");
    }
    let side = |name: &str, noise: Option<NoiseState>| ShiftSide { corpus: name.to_string(), noise };
    let mut pairs = Vec::new();
    for (a, _) in &named {
        for (b, _) in &named {
            if a != b {
                pairs.push((side(a, None), side(b, None)));
            }
        }
    }
    if let Some(n) = noise {
        for (a, _) in &named {
            pairs.push((side(a, None), side(a, Some(n))));
        }
    }
    let corpora: BTreeMap<String, Corpus> = named.into_iter().collect();
    prepare_out(&common.out)?;
    let report = shift_report(&model, &corpora, &pairs, cfg.shift_space, cfg.train.seed)?;
    let hash = manifest.short_hash()?;
    let mut buf = Vec::new();
    report.write_csv(&hash, &mut buf)?;
    write_text(&common.out.join("shift.csv"), &String::from_utf8(buf)?)?;
    manifest.write(&common.out)?;
    for r in &report.rows {
        println!("KL({} || {}) = {:.6}", r.a, r.b, r.kl);
    }
    Ok(())
}

fn cmd_bench(common: &Common, ckpt: &Path, data: &Path, samples: usize) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let mut manifest = Manifest::new("bench", cfg.train.seed, cfg.snapshot());
    let model = load_model(ckpt, &mut manifest)?;
    let mut corpus = load_corpus(data, &stem(data))?;
    manifest.add_input("data", data)?;
    if samples > 0 {
        let base = corpus.samples.clone();
        corpus.samples = base.iter().cycle().take(samples).cloned().collect();
    }
    prepare_out(&common.out)?;
    let t = timing_bench(&model, &corpus)?;
    let hash = manifest.short_hash()?;
    write_text(&common.out.join("timing.csv"), &format!("{TIMING_HEADER}\n{}\n", t.csv_row(&hash, &corpus.name)))?;
    manifest.write(&common.out)?;
    println!("{} samples in {:.4}s ({:.3e}s per sample)", t.samples, t.total_seconds, t.mean_seconds);
    Ok(())
}

fn cmd_export(common: &Common, ckpt: &Path, data: &Path) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let mut manifest = Manifest::new("export-features", cfg.train.seed, cfg.snapshot());
    let model = load_model(ckpt, &mut manifest)?;
    let corpus = load_corpus(data, &stem(data))?;
    manifest.add_input("data", data)?;
    prepare_out(&common.out)?;
    let mut buf = Vec::new();
    export_features(&model, &corpus, &mut buf)?;
    write_text(&common.out.join("features.csv"), &String::from_utf8(buf)?)?;
    manifest.write(&common.out)?;
    println!("exported {} rows x {} features", corpus.len(), model.repr_dim());
    Ok(())
}

/// Names of all regimes, for error messages and help.
pub fn regime_names() -> Vec<&'static str> {
    Regime::ALL.iter().map(Regime::name).collect()
}
