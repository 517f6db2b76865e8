// SPDX-License-Identifier: Apache-2.0

//! Scripted control-loop traces for the decision engine.

use edgescale_core::replay::{replay_samples, ScriptedSource, StubTarget};
use edgescale_core::{
    render_metrics, DEConfig, DecisionEngine, OccupancySource, SourceError, StepAction,
    StepReport, ZoneOccupancySample,
};

fn sample(t: f64, count: u32) -> ZoneOccupancySample {
    ZoneOccupancySample {
        sim_time_s: t,
        zone_id: "zone3".into(),
        count,
    }
}

fn script(counts: &[u32], period: f64) -> Vec<ZoneOccupancySample> {
    counts
        .iter()
        .enumerate()
        .map(|(i, c)| sample(i as f64 * period, *c))
        .collect()
}

fn config(window: usize, cooldown: f64) -> DEConfig {
    DEConfig {
        window_size: window,
        cooldown_s: cooldown,
        poll_period_s: 10.0,
        gamma: 3.0,
        min_replicas: 1,
        max_replicas: 2,
        ..DEConfig::default()
    }
}

fn avg_of(report: &StepReport) -> f64 {
    match report {
        StepReport::Evaluated { avg, .. } => *avg,
        StepReport::Skipped(e) => panic!("skipped: {e}"),
    }
}

fn action_of(report: &StepReport) -> &StepAction {
    match report {
        StepReport::Evaluated { action, .. } => action,
        StepReport::Skipped(e) => panic!("skipped: {e}"),
    }
}

// Window of 10: averages climb 2.0 .. 2.9, then 3.1 (crossing), then 2.8.
const CROSSING: [u32; 14] = [2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 4, 0, 3, 3];

#[test]
fn crossing_gamma_issues_one_upscale() {
    let out = replay_samples(&config(10, 0.0), 1, &script(&CROSSING[..11], 10.0)).unwrap();
    assert_eq!(avg_of(&out.reports[9]), 2.9);
    assert_eq!(avg_of(&out.reports[10]), 3.1);
    assert_eq!(out.events.len(), 1);
    let e = &out.events[0];
    assert_eq!((e.from_replicas, e.to_replicas, e.timestamp), (1, 2, 100.0));
    assert_eq!(e.reason, "avg=3.1 gamma=3");
    // First step reconciles (no-op), the crossing step scales.
    assert_eq!(out.set_calls, 2);
}

#[test]
fn steady_average_issues_no_further_calls() {
    let counts = vec![4u32; 50];
    let out = replay_samples(&config(6, 0.0), 1, &script(&counts, 5.0)).unwrap();
    assert_eq!(out.events.len(), 1);
    assert_eq!(out.set_calls, 1);
    assert!(out.reports[1..]
        .iter()
        .all(|r| *action_of(r) == StepAction::None));
}

#[test]
fn cooldown_defers_downscale() {
    let out = replay_samples(&config(10, 30.0), 1, &script(&CROSSING, 10.0)).unwrap();
    let avgs: Vec<f64> = out.reports.iter().map(avg_of).collect();
    assert_eq!(&avgs[10..], &[3.1, 2.8, 2.8, 2.8]);
    assert_eq!(*action_of(&out.reports[11]), StepAction::Cooldown { desired: 1 });
    assert_eq!(*action_of(&out.reports[12]), StepAction::Cooldown { desired: 1 });
    assert!(matches!(action_of(&out.reports[13]), StepAction::Applied(_)));
    let times: Vec<f64> = out.events.iter().map(|e| e.timestamp).collect();
    assert_eq!(times, [100.0, 130.0]);
}

#[test]
fn zero_cooldown_downscales_immediately() {
    let out = replay_samples(&config(10, 0.0), 1, &script(&CROSSING, 10.0)).unwrap();
    let times: Vec<f64> = out.events.iter().map(|e| e.timestamp).collect();
    assert_eq!(times, [100.0, 110.0]);
}

struct Flaky {
    fail_next: bool,
    inner: ScriptedSource,
}

impl OccupancySource for Flaky {
    fn zone_occupancy(&mut self, zone: &str) -> Result<ZoneOccupancySample, SourceError> {
        if std::mem::take(&mut self.fail_next) {
            return Err(SourceError::Unreachable("connection refused".into()));
        }
        self.inner.zone_occupancy(zone)
    }
}

#[test]
fn unreachable_location_api_skips_step() {
    let mut engine = DecisionEngine::new(config(4, 0.0)).unwrap();
    let mut target = StubTarget::new(1);
    let mut src = Flaky {
        fail_next: false,
        inner: ScriptedSource::new(script(&[1, 5], 10.0)),
    };
    engine.control_step(&mut src, &mut target);
    let window_before = engine.window().clone();
    src.fail_next = true;
    assert!(matches!(
        engine.control_step(&mut src, &mut target),
        StepReport::Skipped(SourceError::Unreachable(_))
    ));
    assert_eq!(engine.window(), &window_before);
    assert_eq!(engine.metrics().poll_failures_total, 1);
    assert!(render_metrics(engine.metrics()).contains("de_poll_failures_total 1\n"));
}

#[test]
fn rejected_scale_is_retried_next_step() {
    let mut engine = DecisionEngine::new(config(1, 0.0)).unwrap();
    let mut target = StubTarget::new(1);
    target.reject = true;
    let mut src = ScriptedSource::new(script(&[5, 5, 5], 10.0));
    let r = engine.control_step(&mut src, &mut target);
    assert!(matches!(action_of(&r), StepAction::Rejected { replicas: 2, .. }));
    assert_eq!(engine.last_commanded(), None);
    target.reject = false;
    let r = engine.control_step(&mut src, &mut target);
    assert!(matches!(action_of(&r), StepAction::Applied(_)));
    assert_eq!(engine.last_commanded(), Some(2));
    let r = engine.control_step(&mut src, &mut target);
    assert_eq!(*action_of(&r), StepAction::None);
    assert_eq!(target.set_calls, 2);
}

#[test]
fn metrics_after_crossing() {
    let mut engine = DecisionEngine::new(config(10, 0.0)).unwrap();
    let mut target = StubTarget::new(1);
    for s in script(&CROSSING[..11], 10.0) {
        target.now_s = s.sim_time_s;
        engine.control_step(&mut ScriptedSource::new([s]), &mut target);
    }
    let text = render_metrics(engine.metrics());
    assert!(text.contains("de_avg_users{zone=\"zone3\"} 3.1\n"), "{text}");
    assert!(text.contains("de_scale_actions_total 1\n"));
    assert!(text.contains("de_replicas_desired 2\n"));
}

#[test]
fn custom_policy_is_still_clamped() {
    struct Always(u32);
    impl edgescale_core::ScalingPolicy for Always {
        fn desired_replicas(&self, _avg: f64) -> u32 {
            self.0
        }
    }
    let mut engine = DecisionEngine::new(config(1, 0.0))
        .unwrap()
        .with_policy(Box::new(Always(9)));
    let mut target = StubTarget::new(1);
    engine.control_step(&mut ScriptedSource::new([sample(0.0, 0)]), &mut target);
    assert_eq!(target.replicas, 2);
}
