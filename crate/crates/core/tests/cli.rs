use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bandit-rex");

const SMALL_ENV: &str = r#"{"n_users": 20, "n_challenges": 15, "weekly_pool": 10, "K": 3, "horizon_weeks": 4, "seed": 9}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("BANDIT_REX_THREADS", "2")
        .output()
        .unwrap()
}

fn experiment(policies: &str) -> String {
    format!(
        r#"{{"environment": {SMALL_ENV}, "policies": [{policies}],
            "evaluators": ["omniscient", "doubly_robust", "offline_precision"],
            "analyses": ["learning_curve", "diversity_jsd", "user_improvement", "weight_outcome", "dynamic_users"],
            "replications": 2}}"#
    )
}

const POLICIES: &str = r#"{"name": "ts_diverse", "kind": "ts_diverse"},
    {"name": "ucb", "kind": "ucb", "alpha": 0.5},
    {"name": "explore", "kind": "pure_explore"}"#;

#[test]
fn generate_writes_the_data_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("env.json"), SMALL_ENV).unwrap();
    let out = run(dir.path(), &["--quiet", "generate", "--config", "env.json", "--out", "data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "challenges.csv",
        "users.csv",
        "weighins.csv",
        "selections.csv",
        "interactions.csv",
        "ground_truth.json",
    ] {
        assert!(dir.path().join("data").join(f).exists(), "{f}");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 9);
    assert!(truth["zeta"].as_array().unwrap().len() == 24);
}

#[test]
fn run_is_deterministic_and_report_covers_every_metric() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.json"), experiment(POLICIES)).unwrap();
    let a = run(dir.path(), &["--quiet", "run", "--config", "exp.json", "--out", "a"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(dir.path(), &["--quiet", "run", "--config", "exp.json", "--out", "b"]);
    assert!(b.status.success());
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/metrics.csv"), read("b/metrics.csv"));
    for f in ["learning_curves.csv", "diversity.csv", "run_manifest.json", "summary.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }

    let report = run(dir.path(), &["report", "a"]);
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.lines().next().unwrap().split_whitespace().eq(["policy", "metric", "mean", "std_error"]));
    for metric in [
        "omniscient_reward",
        "dr_value",
        "offline_precision",
        "final_cumulative_reward",
        "diversity_jsd",
        "user_improvement",
        "weightloss_rate",
        "dynamic_user_reward",
    ] {
        assert!(text.contains(metric), "{metric}");
    }
}

#[test]
fn policy_filter_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.json"), experiment(POLICIES)).unwrap();
    let out = run(
        dir.path(),
        &["--quiet", "run", "--config", "exp.json", "--out", "r", "--policies", "ucb,explore", "--seed", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap();
    assert!(!metrics.contains("ts_diverse"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["policies"], serde_json::json!(["ucb", "explore"]));
}

#[test]
fn evaluate_on_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.json"), experiment(POLICIES)).unwrap();
    assert!(run(dir.path(), &["--quiet", "generate", "--config", "exp.json", "--out", "data"]).status.success());
    let out = run(dir.path(), &["evaluate", "--config", "exp.json", "--data", "data", "--out", "eval"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert!(metrics.contains("dr_value") && metrics.contains("offline_precision"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"replications": 0}"#).unwrap();
    let out = run(dir.path(), &["run", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));

    fs::write(dir.path().join("unknown.json"), r#"{"environment": {"n_users": 0}}"#).unwrap();
    let out = run(dir.path(), &["run", "--config", "unknown.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("environment.n_users"));

    let out = run(dir.path(), &["run", "--config", "absent.json"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("exp.json"), experiment(POLICIES)).unwrap();
    let out = run(dir.path(), &["evaluate", "--config", "exp.json", "--data", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["report", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}
