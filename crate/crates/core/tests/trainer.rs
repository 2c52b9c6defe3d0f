mod common;

use perturb_detect::eval::evaluate;
use perturb_detect::rl::ControllerKind;
use perturb_detect::trainer::{train, write_history_csv, Regime, HISTORY_HEADER};

#[test]
fn dpnet_history_respects_bounds_and_counts() {
    let (source, _) = common::tiny_corpora();
    let cfg = common::tiny_config(Regime::Dpnet, 1);
    let ckpt = train(&cfg, &source).unwrap();
    assert_eq!(ckpt.history.len(), cfg.max_episode * cfg.max_step);
    assert_eq!(ckpt.transition_count(), ckpt.history.len());
    let b = cfg.noise_bounds;
    for row in &ckpt.history {
        let [mu, sigma] = row.noise.unwrap();
        assert!((b.mu_lo..=b.mu_hi).contains(&mu) && (b.sigma_lo..=b.sigma_hi).contains(&sigma));
        let [dm, ds] = row.action.unwrap();
        assert!(dm.abs() <= cfg.rl.action_bound && ds.abs() <= cfg.rl.action_bound);
        assert!(row.reward.unwrap().is_finite() && row.mean_loss.is_finite());
    }
    assert!(ckpt.detector.is_finite());
}

#[test]
fn training_is_deterministic() {
    let (source, _) = common::tiny_corpora();
    for regime in Regime::ALL {
        let cfg = common::tiny_config(regime, 9);
        let a = train(&cfg, &source).unwrap();
        let b = train(&cfg, &source).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap(), "{regime}");
    }
}

#[test]
fn seeds_change_the_result() {
    let (source, _) = common::tiny_corpora();
    let a = train(&common::tiny_config(Regime::Dpnet, 1), &source).unwrap();
    let b = train(&common::tiny_config(Regime::Dpnet, 2), &source).unwrap();
    assert_ne!(a.detector, b.detector);
}

#[test]
fn baseline_has_no_noise_and_no_agent() {
    let (source, _) = common::tiny_corpora();
    let ckpt = train(&common::tiny_config(Regime::Baseline, 3), &source).unwrap();
    assert!(ckpt.agent.is_none());
    assert!(ckpt.history.iter().all(|r| r.noise.is_none() && r.action.is_none() && r.reward.is_none()));
}

#[test]
fn fixed_noise_keeps_its_state() {
    let (source, _) = common::tiny_corpora();
    let cfg = common::tiny_config(Regime::FixedNoise, 3);
    let ckpt = train(&cfg, &source).unwrap();
    assert!(ckpt.agent.is_none());
    let first = ckpt.history[0].noise.unwrap();
    assert_eq!(first, [cfg.initial_mu, cfg.initial_sigma]);
    assert!(ckpt.history.iter().all(|r| r.noise == Some(first)));
}

#[test]
fn near_zero_fixed_noise_approximates_baseline() {
    let (source, _) = common::tiny_corpora();
    let mut cfg = common::tiny_config(Regime::FixedNoise, 4);
    cfg.initial_sigma = cfg.noise_bounds.sigma_lo;
    let noisy = train(&cfg, &source).unwrap();
    let base = train(&common::tiny_config(Regime::Baseline, 4), &source).unwrap();
    let dist: f64 = noisy
        .detector
        .extractor
        .flatten()
        .iter()
        .zip(base.detector.extractor.flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = base.detector.extractor.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(dist < 0.05 * norm, "distance {dist} vs norm {norm}");
}

#[test]
fn two_step_runs_search_then_fixed_training() {
    let (source, _) = common::tiny_corpora();
    let cfg = common::tiny_config(Regime::TwoStep, 6);
    let ckpt = train(&cfg, &source).unwrap();
    let search: Vec<_> = ckpt.history.iter().filter(|r| r.phase == 1).collect();
    let fixed: Vec<_> = ckpt.history.iter().filter(|r| r.phase == 2).collect();
    assert_eq!(search.len(), cfg.max_episode * cfg.max_step);
    assert_eq!(fixed.len(), cfg.max_episode * cfg.max_step);
    let chosen = fixed[0].noise.unwrap();
    assert!(fixed.iter().all(|r| r.noise == Some(chosen) && r.action.is_none()));
    let best = search
        .iter()
        .fold(None::<(f64, [f64; 2])>, |acc, r| match acc {
            Some((best, _)) if r.reward.unwrap() <= best => acc,
            _ => Some((r.reward.unwrap(), r.noise.unwrap())),
        })
        .unwrap();
    assert_eq!(best.1, chosen);
    assert_eq!([ckpt.final_state.mu, ckpt.final_state.sigma], chosen);
}

#[test]
fn dqn_controller_trains() {
    let (source, target) = common::tiny_corpora();
    let mut cfg = common::tiny_config(Regime::Dpnet, 2);
    cfg.controller = ControllerKind::Dqn;
    let ckpt = train(&cfg, &source).unwrap();
    assert_eq!(ckpt.agent.as_ref().unwrap().kind, ControllerKind::Dqn);
    let m = evaluate(&ckpt.detector, &target, 0.5).unwrap();
    assert_eq!(m.total(), target.len());
}

#[test]
fn learns_the_source_domain() {
    let (source, _) = common::tiny_corpora();
    let mut cfg = common::tiny_config(Regime::Baseline, 0);
    cfg.max_episode = 15;
    cfg.batch_budget = 0;
    cfg.lr_encoder = 3e-3;
    let ckpt = train(&cfg, &source).unwrap();
    let m = evaluate(&ckpt.detector, &source, 0.5).unwrap();
    assert!(m.accuracy > 0.9, "source accuracy {}", m.accuracy);
    let first = ckpt.history.first().unwrap().mean_loss;
    let last = ckpt.history.last().unwrap().mean_loss;
    assert!(last < first, "loss {first} -> {last}");
}

#[test]
fn history_csv_has_one_row_per_step() {
    let (source, _) = common::tiny_corpora();
    let ckpt = train(&common::tiny_config(Regime::Baseline, 1), &source).unwrap();
    let mut buf = Vec::new();
    write_history_csv(&ckpt.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HISTORY_HEADER);
    assert_eq!(lines.len(), ckpt.history.len() + 1);
    assert!(lines[1].starts_with("0,0,0,,,,,,"));
}

#[test]
fn empty_or_single_class_corpus_is_rejected() {
    let (source, _) = common::tiny_corpora();
    let cfg = common::tiny_config(Regime::Baseline, 0);
    let one_class = perturb_detect::corpus::Corpus::new("x", source.samples.iter().filter(|s| s.label == 1).cloned().collect());
    assert!(train(&cfg, &one_class).is_err());
    assert!(train(&cfg, &perturb_detect::corpus::Corpus::new("e", vec![])).is_err());
}
