// SPDX-License-Identifier: Apache-2.0

use edgescale_core::orchestrator::replay_desired;
use edgescale_core::replay::replay_samples;
use edgescale_core::{
    desired_replicas, DEConfig, DeploymentState, Orchestrator, PerClass, ScenarioConfig,
    Simulator, SlidingWindow, UserClass, ZoneOccupancySample,
};
use proptest::prelude::*;

/// Enumerates replica levels: the smallest n >= 1 whose threshold n * gamma
/// the average has not reached, clamped to the bounds.
fn policy_oracle(avg: f64, gamma: f64, min: u32, max: u32) -> u32 {
    let mut n = 1u32;
    while n < max && f64::from(n) * gamma <= avg {
        n += 1;
    }
    n.clamp(min, max)
}

fn de(gamma: f64, min: u32, max: u32) -> DEConfig {
    DEConfig {
        gamma,
        min_replicas: min,
        max_replicas: max,
        ..DEConfig::default()
    }
}

fn bounds() -> impl Strategy<Value = (u32, u32)> {
    (1u32..8).prop_flat_map(|min| (Just(min), min..min + 12))
}

proptest! {
    #[test]
    fn policy_matches_enumeration(avg in 0.0f64..60.0, gamma in 0.1f64..10.0, (min, max) in bounds()) {
        prop_assert_eq!(desired_replicas(avg, &de(gamma, min, max)), policy_oracle(avg, gamma, min, max));
    }

    #[test]
    fn policy_on_integer_grid(num in 0u32..200, gamma in 1u32..8, (min, max) in bounds()) {
        // Window averages of integer counts land exactly on thresholds often.
        let avg = f64::from(num) / 4.0;
        let g = f64::from(gamma) / 2.0;
        prop_assert_eq!(desired_replicas(avg, &de(g, min, max)), policy_oracle(avg, g, min, max));
    }

    #[test]
    fn policy_monotone_and_bounded(a in 0.0f64..50.0, b in 0.0f64..50.0, gamma in 0.1f64..10.0, (min, max) in bounds()) {
        let c = de(gamma, min, max);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (dl, dh) = (desired_replicas(lo, &c), desired_replicas(hi, &c));
        prop_assert!(dl <= dh);
        prop_assert!((min..=max).contains(&dl) && (min..=max).contains(&dh));
    }

    #[test]
    fn two_level_policy_matches_demo(avg in 0.0f64..12.0) {
        let d = desired_replicas(avg, &de(3.0, 1, 2));
        prop_assert_eq!(d == 1, avg < 3.0);
        prop_assert_eq!(d == 2, avg >= 3.0);
        let wide = desired_replicas(avg, &de(3.0, 1, 10));
        prop_assert_eq!(wide == 2, (3.0..6.0).contains(&avg));
    }

    #[test]
    fn window_matches_naive_recompute(cap in 1usize..20, counts in prop::collection::vec(0u32..50, 1..80)) {
        let mut w = SlidingWindow::new(cap);
        for (i, c) in counts.iter().enumerate() {
            w.push(ZoneOccupancySample { sim_time_s: i as f64, zone_id: "z".into(), count: *c });
            let tail = &counts[(i + 1).saturating_sub(cap)..=i];
            let naive = tail.iter().map(|&c| f64::from(c)).sum::<f64>() / tail.len() as f64;
            let avg = w.average().unwrap();
            prop_assert!((avg - naive).abs() <= 1e-9 * naive.abs().max(1.0));
            let lo = f64::from(*tail.iter().min().unwrap());
            let hi = f64::from(*tail.iter().max().unwrap());
            prop_assert!(lo <= avg && avg <= hi);
            prop_assert!(w.len() <= cap);
        }
    }

    #[test]
    fn replay_is_deterministic(counts in prop::collection::vec(0u32..8, 1..120), window in 1usize..10, cooldown in 0u32..4) {
        let samples: Vec<_> = counts.iter().enumerate().map(|(i, c)| ZoneOccupancySample {
            sim_time_s: i as f64 * 5.0, zone_id: "zone3".into(), count: *c,
        }).collect();
        let cfg = DEConfig { window_size: window, cooldown_s: f64::from(cooldown) * 5.0, max_replicas: 4, ..DEConfig::default() };
        let a = replay_samples(&cfg, 1, &samples).unwrap();
        let b = replay_samples(&cfg, 1, &samples).unwrap();
        prop_assert_eq!(&a, &b);
        // Never more than one call per step.
        prop_assert!(a.set_calls as usize <= samples.len());
    }

    #[test]
    fn orchestrator_log_replays_desired(ops in prop::collection::vec((1u32..6, 0u32..4), 0..40), latency in 0u32..10) {
        let mut o = Orchestrator::new();
        o.create_deployment(DeploymentState {
            name: "vod".into(), namespace: "default".into(), desired_replicas: 1, ready_replicas: 1,
            readiness_latency_s: f64::from(latency), min_replicas: 1, max_replicas: 5,
        }).unwrap();
        let mut t = 0.0;
        for (replicas, dt) in ops {
            t += f64::from(dt);
            o.advance_to(t);
            o.set_scale("default", "vod", replicas, "p").unwrap();
            let (d, r) = o.get_scale("default", "vod").unwrap();
            prop_assert!(r <= d);
        }
        let events = o.list_events(None);
        prop_assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        prop_assert!(events.iter().all(|e| e.from_replicas != e.to_replicas));
        let (d, _) = o.get_scale("default", "vod").unwrap();
        prop_assert_eq!(replay_desired(1, "vod", &events).unwrap(), d);
        o.advance_to(t + f64::from(latency));
        prop_assert_eq!(o.get_scale("default", "vod").unwrap(), (d, d));
    }
}

fn scenario(seed: u64, s: u32, l: u32, h: u32) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        user_counts: PerClass {
            stationary: s,
            low_velocity: l,
            high_velocity: h,
        },
        ..ScenarioConfig::default_macro()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulator_invariants(seed in any::<u64>(), s in 0u32..5, l in 0u32..5, h in 0u32..5, small_radius in any::<bool>()) {
        let mut cfg = scenario(seed, s, l, h);
        if small_radius {
            for ap in &mut cfg.access_points {
                ap.radius_m = 200.0;
            }
        }
        let mut sim = Simulator::load_scenario(cfg.clone()).unwrap();
        let mut twin = Simulator::load_scenario(cfg.clone()).unwrap();
        let start: Vec<_> = sim.users().to_vec();
        let zones: Vec<String> = cfg.zones.iter().map(|z| z.zone_id.clone()).collect();
        for _ in 0..300 {
            let before: Vec<_> = sim.users().to_vec();
            sim.tick();
            twin.tick();
            prop_assert_eq!(sim.users(), twin.users());
            let snap = sim.snapshot();
            let assoc: usize = zones.iter().map(|z| snap.zone_user_count(z).unwrap()).sum();
            prop_assert_eq!(assoc + snap.unassociated_count(), sim.user_count());
            for (u, prev) in sim.users().iter().zip(&before) {
                prop_assert!((0.0..=cfg.map_width_m).contains(&u.position.x_m));
                prop_assert!((0.0..=cfg.map_height_m).contains(&u.position.y_m));
                let step = cfg.speeds.get(u.class) * cfg.tick_s;
                prop_assert!(u.position.distance(&prev.position) <= step + 1e-9);
                if let Some(ap) = &u.association {
                    let ap = cfg.access_points.iter().find(|a| &a.ap_id == ap).unwrap();
                    prop_assert!(ap.covers(&u.position));
                }
            }
        }
        for (u, s0) in sim.users().iter().zip(&start) {
            if u.class == UserClass::Stationary {
                prop_assert_eq!(u.position, s0.position);
            }
        }
        if !small_radius {
            prop_assert_eq!(sim.snapshot().unassociated_count(), 0);
        }
    }
}
