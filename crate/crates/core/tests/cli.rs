use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn delaynet(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaynet"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn stable_fixture_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let o = delaynet(
        &["stability", "--config", config("scalar_stable.toml").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("certificate.toml")).unwrap();
    let doc: toml::Table = text.parse().unwrap();
    let margin = doc["certificate"]["margin"].as_float().unwrap();
    assert!(margin < 0.0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("certificate.toml"));
}

#[test]
fn unstable_fixture_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = delaynet(
        &[
            "stability",
            "--config",
            config("scalar_unstable.toml").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
    assert!(dir.path().join("infeasible.toml").is_file());
    assert!(!dir.path().join("certificate.toml").exists());
}

#[test]
fn divergence_exits_3_and_keeps_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = delaynet(
        &["simulate", "--config", config("scalar_unstable.toml").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(log.lines().count() > 1);
    let summary = std::fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    assert!(summary.contains("diverged = true"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = delaynet(&["simulate", "--config", "does/not/exist.toml"], dir.path());
    assert_eq!(code(&missing), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "horizon = 10\nunknown_key = 1\n").unwrap();
    assert_eq!(
        code(&delaynet(&["simulate", "--config", bad.to_str().unwrap()], dir.path())),
        2
    );

    let beta = delaynet(
        &[
            "stability",
            "--config",
            config("scalar_stable.toml").to_str().unwrap(),
            "--beta",
            "1.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&beta), 2);

    let inverted = dir.path().join("inverted.toml");
    let text = std::fs::read_to_string(config("scalar_stable.toml"))
        .unwrap()
        .replace("input = [0, 1]", "input = [2, 1]");
    std::fs::write(&inverted, text).unwrap();
    assert_eq!(
        code(&delaynet(
            &["simulate", "--config", inverted.to_str().unwrap()],
            dir.path()
        )),
        2
    );
}

#[test]
fn simulate_writes_log_summary_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("scalar_stable.toml");
    let o = delaynet(
        &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    for f in ["log.csv", "summary.toml", "delays_input.txt", "delays_output.txt"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary: toml::Table = std::fs::read_to_string(dir.path().join("summary.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(summary["seed"].as_integer(), Some(5));

    let again = tempfile::tempdir().unwrap();
    delaynet(
        &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5"],
        again.path(),
    );
    assert_eq!(
        std::fs::read(dir.path().join("log.csv")).unwrap(),
        std::fs::read(again.path().join("log.csv")).unwrap()
    );
}

#[test]
fn simulate_replays_delays() {
    let first = tempfile::tempdir().unwrap();
    let cfg = config("scalar_stable.toml");
    delaynet(
        &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "1"],
        first.path(),
    );
    let second = tempfile::tempdir().unwrap();
    let o = delaynet(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "2",
            "--controller",
            "lqr",
            "--replay",
            first.path().to_str().unwrap(),
        ],
        second.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(first.path().join("delays_input.txt")).unwrap(),
        std::fs::read(second.path().join("delays_input.txt")).unwrap()
    );
}

#[test]
fn batch_replay_reproduces_metrics() {
    let cfg = config("scalar_stable.toml");
    let first = tempfile::tempdir().unwrap();
    let o = delaynet(
        &["batch", "--config", cfg.to_str().unwrap(), "--trials", "4"],
        first.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(first.path().join("metrics.csv")).unwrap();
    // Header plus 4 trials for each of the two configured controllers.
    assert_eq!(metrics.lines().count(), 1 + 8);
    assert!(first.path().join("traces/trial_003_output.txt").is_file());
    let summary: toml::Table = std::fs::read_to_string(first.path().join("summary.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(summary["controllers"].as_array().unwrap().len(), 2);

    let second = tempfile::tempdir().unwrap();
    let o = delaynet(
        &[
            "batch",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "4",
            "--replay",
            first.path().to_str().unwrap(),
        ],
        second.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        metrics,
        std::fs::read_to_string(second.path().join("metrics.csv")).unwrap()
    );
}

#[test]
fn norms_lists_every_output_delay() {
    let dir = tempfile::tempdir().unwrap();
    let o = delaynet(
        &[
            "norms",
            "--config",
            config("lane_change.toml").to_str().unwrap(),
            "--grid",
            "256",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let doc: toml::Table = std::fs::read_to_string(dir.path().join("norms.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let inst = doc["instances"].as_array().unwrap();
    let delays: Vec<i64> = inst.iter().map(|i| i["d_o"].as_integer().unwrap()).collect();
    assert_eq!(delays, vec![4, 5, 6, 7]);
    for i in inst {
        let mu = i["mu"].as_array().unwrap();
        assert_eq!(mu[6].as_float(), Some(i["d_o"].as_integer().unwrap() as f64));
    }
}

#[test]
fn help_documents_exit_codes() {
    let o = Command::new(env!("CARGO_BIN_EXE_delaynet"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes"));
    assert!(text.contains("DELAYNET_LOG_LEVEL"));
}
