use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perturb-detect")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn small_train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train".to_string(),
        "--data".into(),
        s(&data.join("source.jsonl")),
        "--out".into(),
        s(out),
        "--set".into(),
        "max_episode=2".into(),
        "--set".into(),
        "max_step=3".into(),
        "--set".into(),
        "batch_budget=32".into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", &s(&data)]);
    for f in ["source.jsonl", "target.jsonl", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let train = tmp.path().join("train");
    small_train(&data, &train, &["--controller", "dqn"]);
    let history = std::fs::read_to_string(train.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 2 * 3);
    let ckpt = s(&train.join("checkpoint.bin"));

    let source = s(&data.join("source.jsonl"));
    let target = s(&data.join("target.jsonl"));
    let eval = tmp.path().join("eval");
    ok(&["eval", "--ckpt", &ckpt, "--targets", &format!("{source},{target}"), "--out", &s(&eval)]);
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    // header, two targets, average
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.lines().last().unwrap().contains("average"));

    let attack = tmp.path().join("attack");
    ok(&["attack", "--ckpt", &ckpt, "--data", &target, "--attack", "paraphrase", "--out", &s(&attack)]);
    assert!(attack.join("attack.csv").exists());

    let bench = tmp.path().join("bench");
    ok(&["bench", "--ckpt", &ckpt, "--data", &target, "--samples", "20", "--out", &s(&bench)]);
    assert!(bench.join("timing.csv").exists());

    let shift = tmp.path().join("shift");
    ok(&["shift", "--data", &format!("{source},{target}"), "--noise", "0.1,0.3", "--set", "shift_space=pooled", "--out", &s(&shift)]);
    let rows = std::fs::read_to_string(shift.join("shift.csv")).unwrap();
    assert!(rows.lines().count() >= 3);
}

#[test]
fn regimes_are_selectable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", &s(&data)]);
    for regime in ["baseline", "fixed_noise", "two_step"] {
        small_train(&data, &tmp.path().join(regime), &["--regime", regime]);
        assert!(tmp.path().join(regime).join("checkpoint.bin").exists());
    }
}

#[test]
fn unknown_override_key_lists_valid_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--data", "unused.jsonl", "--out", &s(tmp.path()), "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("max_episode") && err.contains("lambda3"), "{err}");
}

#[test]
fn bad_inputs_fail_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = s(&tmp.path().join("missing.bin"));
    let out = run(&["eval", "--ckpt", &missing, "--targets", &missing, "--out", &s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.bin"));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["train", "--data", &missing, "--out", &s(tmp.path()), "--regime", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("two_step"));
}

#[test]
fn help_exits_zero() {
    assert!(ok(&["--help"]).contains("train"));
}
