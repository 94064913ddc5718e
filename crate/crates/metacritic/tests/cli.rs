use std::path::Path;
use std::process::{Command, Output};

use metacritic::checkpoint;
use metacritic::records::read_results;
use metacritic::suites::embeddings::read_embeddings;
use metacritic::taskset::read_task_set;

const TINY: &str = r#"
[regression]
train_tasks = 6
test_tasks = 2
repeats = 2
shots = [4]
conditions = ["mixture"]
eval_points = 10
semi_study_tasks = 0

[regression.train]
meta_episodes = 1
inner_steps = 3
test_steps = 3

[regression.baseline]
budget = 3
source_steps = 5
meta_iterations = 3

[embeddings]
tasks = 24
"#;

fn run(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_metacritic"));
    cmd.args(args).env_remove("METACRITIC_SEED").env("RUST_LOG", "warn").current_dir(dir);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn regression_run_writes_every_artifact_and_is_reproducible() {
    let dir = tiny_dir();
    let a = run(dir.path(), &["regression", "--config", "tiny.toml", "--seed", "7", "--out", "a"], &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(dir.path(), &["regression", "--config", "tiny.toml", "--seed", "7", "--out", "b", "--jobs", "2"], &[]);
    assert!(b.status.success());
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/regression.csv"), read("b/regression.csv"));
    assert_eq!(read("a/regression_mixture.ckpt"), read("b/regression_mixture.ckpt"));

    let records = read_results(&dir.path().join("a/regression.csv")).unwrap();
    assert_eq!(records.len(), 2 * 2 * 5);
    assert_eq!(read_task_set(&dir.path().join("a/regression_mixture_test.tasks")).unwrap().len(), 2);
    let mc = checkpoint::load(&dir.path().join("a/regression_mixture.ckpt")).unwrap();
    assert_eq!((mc.state_dim(), mc.action_dim()), (1, 1));

    let manifest: serde_json::Value = serde_json::from_slice(&read("a/regression_manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["experiment"], "regression");
    assert_eq!(manifest["config"]["regression"]["test_tasks"], 2);

    let e = run(dir.path(), &["export-embeddings", "--config", "tiny.toml", "--checkpoint", "a/regression_mixture.ckpt", "--out", "e"], &[]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert_eq!(read_embeddings(&dir.path().join("e/embeddings.csv")).unwrap().len(), 24);
    assert!(String::from_utf8_lossy(&e.stdout).contains("leave-one-out accuracy"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tiny_dir();
    let args = ["regression", "--config", "tiny.toml", "--methods", "standard", "--out", "env"];
    let out = run(dir.path(), &args, &[("METACRITIC_SEED", "42")]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("env/regression_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["methods"], serde_json::json!(["standard"]));

    let out = run(dir.path(), &[&args[..], &["--seed", "3"]].concat(), &[("METACRITIC_SEED", "42")]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("env/regression_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn missing_config_is_noted_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gradcheck", "--seed", "1", "--out", "g"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("desk-scale defaults"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("worst relative error"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tiny_dir();
    for args in [
        &["frobnicate"][..],
        &["regression", "--bogus"],
        &["bandit", "--methods", "fomaml"],
        &["regression", "--config", "missing.toml"],
        &["export-embeddings", "--checkpoint", "tiny.toml"],
    ] {
        let out = run(dir.path(), args, &[]);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
