//! End-to-end tests of the scenario runner binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn openhk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_openhk"))
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const TINY_OPEN: &str = r#"{
    "mode": "open",
    "n0": 6,
    "a": 0.0,
    "b": 6.0,
    "lambda_a": 5.0,
    "lambda_d": 0.4,
    "t_end": 1.0,
    "dt": 0.002,
    "grid": 21,
    "realizations": 8,
    "seed": 11,
    "traces": 2
}"#;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = openhk();
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

#[test]
fn open_scenario_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), "scenario.json", TINY_OPEN);
    let out_dir = dir.path().join("out");
    let output = run(
        &["--config", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()],
        &[],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let series = fs::read_to_string(out_dir.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 22); // header + one row per grid point
    assert!(series.starts_with("t,mean_U0,var_U0,mean_U,var_U,mean_V,var_V,"));
    assert!(out_dir.join("events_0.csv").exists());
    assert!(out_dir.join("events_1.csv").exists());
    assert!(!out_dir.join("events_2.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["config"]["lambda_d"], 0.4);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), "scenario.json", TINY_OPEN);
    let out_dir = dir.path().join("out");
    let output = run(
        &[
            "--config",
            config.to_str().unwrap(),
            "--lambda-d",
            "0.62",
            "--traces",
            "1",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["lambda_d"], 0.62);
    assert!(out_dir.join("events_0.csv").exists());
    assert!(!out_dir.join("events_1.csv").exists());
}

#[test]
fn closed_run_emits_only_switch_events() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let output = run(
        &[
            "--mode", "closed", "--n0", "10", "--a", "0", "--b", "6", "--t-end", "2",
            "--grid", "11", "--realizations", "4", "--seed", "3", "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let events = fs::read_to_string(out_dir.join("events_0.csv")).unwrap();
    for line in events.lines().skip(1) {
        assert!(line.contains(",switch,"), "unexpected event: {line}");
    }
}

#[test]
fn invalid_lambda_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        write_scenario(dir.path(), "bad.json", &TINY_OPEN.replace("\"lambda_d\": 0.4", "\"lambda_d\": -1.0"));
    let output = run(&["--config", config.to_str().unwrap()], &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("lambda_d"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(
        dir.path(),
        "bad.json",
        &TINY_OPEN.replace("\"n0\": 6", "\"n_agents\": 6"),
    );
    let output = run(&["--config", config.to_str().unwrap()], &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("n_agents"), "{stderr}");
}

#[test]
fn missing_required_key_exits_with_config_error() {
    let output = run(&["--mode", "closed", "--n0", "5"], &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("`a`"), "{stderr}");
}

#[test]
fn unwritable_out_dir_exits_with_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let config = write_scenario(dir.path(), "scenario.json", TINY_OPEN);
    let out_dir = blocker.join("out"); // path through a regular file
    let output = run(
        &["--config", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn thread_cap_does_not_change_series_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), "scenario.json", TINY_OPEN);
    let out_serial = dir.path().join("serial");
    let out_parallel = dir.path().join("parallel");
    for (out, threads) in [(&out_serial, "1"), (&out_parallel, "4")] {
        let output = run(
            &["--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()],
            &[("OPENHK_THREADS", threads)],
        );
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    let serial = fs::read(out_serial.join("series.csv")).unwrap();
    let parallel = fs::read(out_parallel.join("series.csv")).unwrap();
    assert_eq!(serial, parallel);
    let serial_events = fs::read(out_serial.join("events_0.csv")).unwrap();
    let parallel_events = fs::read(out_parallel.join("events_0.csv")).unwrap();
    assert_eq!(serial_events, parallel_events);
}
