// SPDX-License-Identifier: Apache-2.0

use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;

use edgescale_cli::live::{LiveOptions, LiveSession, Pacing};
use edgescale_cli::remote::{RemoteLocation, RemoteOrchestrator};
use edgescale_core::runtime::{DE_ACTIONS_FILE, ORCHESTRATOR_EVENTS_FILE, SERIES_FILE};
use edgescale_core::{
    run_headless, DeploymentRef, ExperimentConfig, OccupancySource, ScaleOutcome, ScaleTarget,
    SourceError, TargetError,
};
use serde_json::{json, Value};

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

/// A port that was free a moment ago.
fn free_port() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

fn options(pacing: Pacing) -> LiveOptions {
    LiveOptions {
        pacing,
        max_ticks: None,
        location_addr: any_port(),
        orchestrator_addr: any_port(),
        dashboard_dir: None,
        location_url: None,
        orchestrator_url: None,
        output_dir: None,
    }
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

fn steer(addr: SocketAddr, body: Value) -> (u16, Value) {
    let resp = client()
        .post(format!("http://{addr}/sandbox/v1/steer"))
        .json(&body)
        .send()
        .unwrap();
    (resp.status().as_u16(), resp.json().unwrap())
}

#[test]
fn steering_round_trip() {
    let session = LiveSession::start(&ExperimentConfig::demo(1), options(Pacing::Paused)).unwrap();
    let addr = session.location_addr;
    let (s, v) = steer(addr, json!({"type": "SetUserCount", "class": "high_velocity", "count": 0}));
    assert_eq!((s, v), (200, json!({"totalUsers": 8})));
    let (s, v) = steer(addr, json!({"type": "SetUserCount", "class": "stationary", "count": 8}));
    assert_eq!((s, v), (200, json!({"totalUsers": 12})));
    let (s, v) = steer(addr, json!({"type": "AddUser", "class": "stationary"}));
    assert_eq!(s, 400);
    assert_eq!(v["status"], 400);
    let (s, _) = steer(addr, json!({"type": "RemoveUser", "address": "ue-999"}));
    assert_eq!(s, 404);
    let (s, v) = steer(addr, json!({"type": "LoadScenario", "name": "4g-5g-wifi-macro"}));
    assert_eq!((s, v), (200, json!({"totalUsers": 12})));
    let (s, _) = steer(addr, json!({"type": "LoadScenario", "name": "downtown"}));
    assert_eq!(s, 404);
    let report = session.shutdown().unwrap();
    assert_eq!(report.summary.ticks, 0);
}

#[test]
fn fast_live_run_matches_headless() {
    let cfg = ExperimentConfig::demo(300);
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("live");
    let opts = LiveOptions {
        max_ticks: Some(300),
        output_dir: Some(out.clone()),
        ..options(Pacing::Fast)
    };
    let session = LiveSession::start(&cfg, opts).unwrap();
    session.wait_for_end();
    let live = session.shutdown().unwrap();
    let headless = run_headless(&cfg).unwrap();
    assert_eq!(live.rows, headless.rows);
    assert_eq!(live.orchestrator_events, headless.orchestrator_events);

    let reference = dir.path().join("headless");
    headless.write_artifacts(&reference).unwrap();
    for f in [SERIES_FILE, ORCHESTRATOR_EVENTS_FILE, DE_ACTIONS_FILE] {
        assert_eq!(
            std::fs::read(out.join(f)).unwrap(),
            std::fs::read(reference.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn remote_adapters_against_live_services() {
    let session = LiveSession::start(&ExperimentConfig::demo(1), options(Pacing::Paused)).unwrap();
    let mut loc = RemoteLocation::new(&format!("http://{}/", session.location_addr));
    let sample = loc.zone_occupancy("zone3").unwrap();
    let expected = session.shared().location.get_zone("zone3").unwrap();
    assert_eq!(sample.sim_time_s, 0.0);
    assert_eq!(sample.count, expected.number_of_users);
    assert!(matches!(loc.zone_occupancy("zone9"), Err(SourceError::Rejected(_))));

    let mut orch = RemoteOrchestrator::new(&format!("http://{}", session.orchestrator_addr));
    let vod = DeploymentRef::default();
    assert_eq!(orch.get_scale(&vod).unwrap(), (1, 1));
    match orch.set_scale(&vod, 2, "test").unwrap() {
        ScaleOutcome::Applied(e) => assert_eq!((e.from_replicas, e.to_replicas, e.reason.as_str()), (1, 2, "test")),
        other => panic!("{other:?}"),
    }
    assert_eq!(orch.set_scale(&vod, 2, "test").unwrap(), ScaleOutcome::NoOp);
    assert_eq!(orch.get_scale(&vod).unwrap(), (2, 1));
    assert!(matches!(orch.set_scale(&vod, 50, "x"), Err(TargetError::Rejected(_))));
    let missing = DeploymentRef {
        namespace: "default".into(),
        name: "web".into(),
    };
    assert!(matches!(orch.get_scale(&missing), Err(TargetError::Rejected(_))));
    session.shutdown().unwrap();

    let dead = free_port();
    let mut loc = RemoteLocation::new(&format!("http://{dead}"));
    assert!(matches!(loc.zone_occupancy("zone3"), Err(SourceError::Unreachable(_))));
    let mut orch = RemoteOrchestrator::new(&format!("http://{dead}"));
    assert!(matches!(orch.get_scale(&vod), Err(TargetError::Unreachable(_))));
}

#[test]
fn engine_over_http_matches_in_process() {
    let cfg = ExperimentConfig::demo(200);
    let (loc, orch) = (free_port(), free_port());
    let opts = LiveOptions {
        max_ticks: Some(200),
        location_addr: loc,
        orchestrator_addr: orch,
        location_url: Some(format!("http://{loc}")),
        orchestrator_url: Some(format!("http://{orch}")),
        ..options(Pacing::Fast)
    };
    let session = LiveSession::start(&cfg, opts).unwrap();
    session.wait_for_end();
    let remote = session.shutdown().unwrap();
    let local = run_headless(&cfg).unwrap();
    assert_eq!(remote.rows, local.rows);
    assert_eq!(remote.orchestrator_events, local.orchestrator_events);
    assert_eq!(remote.summary.poll_failures, 0);
}

#[test]
fn realtime_pacing_follows_wall_clock() {
    let mut cfg = ExperimentConfig::demo(1);
    cfg.scenario.tick_s = 0.05;
    cfg.decision_engine.poll_period_s = 0.25;
    let opts = LiveOptions {
        max_ticks: Some(10),
        ..options(Pacing::Realtime)
    };
    let started = std::time::Instant::now();
    let session = LiveSession::start(&cfg, opts).unwrap();
    session.wait_for_end();
    let report = session.shutdown().unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert_eq!(report.summary.ticks, 10);
    assert_eq!(report.rows.len(), 2);
    assert!(elapsed >= 0.45, "{elapsed}");
}

#[test]
fn binding_a_taken_port_fails() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let opts = LiveOptions {
        location_addr: taken.local_addr().unwrap(),
        ..options(Pacing::Paused)
    };
    let err = LiveSession::start(&ExperimentConfig::demo(1), opts).err().unwrap();
    assert!(matches!(err, edgescale_cli::live::LiveError::Bind { .. }), "{err}");
}
