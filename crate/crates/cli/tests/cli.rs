// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml")
}

fn edgescale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgescale"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn validate_prints_resolved_config() {
    let out = edgescale(&["validate", "--config", demo_config().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["decision_engine"]["gamma"], 3.0);
    assert_eq!(v["scenario"]["user_counts"]["high_velocity"], 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgescale(&["validate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(3));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[decision_engine]\ngamma = \"three\"\n").unwrap();
    let out = edgescale(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let demo = demo_config();
    let out = edgescale(&["bench", "--config", demo.to_str().unwrap(), "--zone", "zone7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = edgescale(&["bench", "--config", demo.to_str().unwrap(), "--window", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = edgescale(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = edgescale(&[
        "bench",
        "--config",
        demo_config().to_str().unwrap(),
        "--ticks",
        "60",
        "--gamma",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ticks"], 60);
    assert_eq!(summary["polls"], 12);
    for f in ["series.csv", "orchestrator_events.jsonl", "de_actions.jsonl", "summary.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let series = std::fs::read_to_string(out_dir.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 13);
}

#[test]
fn env_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_edgescale"))
        .args(["bench", "--config", demo_config().to_str().unwrap()])
        .env("EDGESCALE_TICKS", "20")
        .env("EDGESCALE_POLL_PERIOD", "10")
        .env("EDGESCALE_OUT", dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((summary["ticks"].as_u64(), summary["polls"].as_u64()), (Some(20), Some(2)));
}

#[test]
fn live_run_stops_at_tick_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgescale(&[
        "run",
        "--config",
        demo_config().to_str().unwrap(),
        "--fast",
        "--ticks",
        "50",
        "--location-addr",
        "127.0.0.1:0",
        "--orchestrator-addr",
        "127.0.0.1:0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["ticks"], 50);
}

#[test]
fn live_run_reports_bind_failure() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = edgescale(&[
        "run",
        "--config",
        demo_config().to_str().unwrap(),
        "--fast",
        "--ticks",
        "5",
        "--location-addr",
        &addr,
        "--orchestrator-addr",
        "127.0.0.1:0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
