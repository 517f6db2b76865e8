// SPDX-License-Identifier: Apache-2.0

//! Prometheus text exposition (format 0.0.4) for decision-engine metrics.

use std::fmt::Write;

use crate::engine::DEMetrics;

pub const CONTENT_TYPE: &str = "text/plain; version=0.0.4; charset=utf-8";

struct Family<'a> {
    name: &'a str,
    help: &'a str,
    kind: &'a str,
}

impl Family<'_> {
    fn header(&self, out: &mut String) {
        let _ = writeln!(out, "# HELP {} {}", self.name, escape_help(self.help));
        let _ = writeln!(out, "# TYPE {} {}", self.name, self.kind);
    }
}

/// Renders `metrics` with a fixed family order. Families with no value yet
/// (before the first poll) are omitted entirely.
pub fn render_metrics(metrics: &DEMetrics) -> String {
    let mut out = String::new();
    let zone = format!("{{zone=\"{}\"}}", escape_label(&metrics.zone));

    let zone_gauges = [
        (
            Family {
                name: "de_avg_users",
                help: "Sliding-window average of users in the monitored zone.",
                kind: "gauge",
            },
            metrics.avg_users,
        ),
        (
            Family {
                name: "de_zone_users",
                help: "Latest raw user count of the monitored zone.",
                kind: "gauge",
            },
            metrics.raw_users.map(f64::from),
        ),
    ];
    for (family, value) in zone_gauges {
        if let Some(v) = value {
            family.header(&mut out);
            let _ = writeln!(out, "{}{} {}", family.name, zone, format_value(v));
        }
    }

    let plain = [
        (
            Family {
                name: "de_replicas_desired",
                help: "Desired replicas of the target deployment.",
                kind: "gauge",
            },
            metrics.desired_replicas.map(f64::from),
        ),
        (
            Family {
                name: "de_replicas_ready",
                help: "Ready replicas of the target deployment.",
                kind: "gauge",
            },
            metrics.current_replicas.map(f64::from),
        ),
        (
            Family {
                name: "de_scale_actions_total",
                help: "Scale changes applied by the decision engine.",
                kind: "counter",
            },
            Some(metrics.scale_actions_total as f64),
        ),
        (
            Family {
                name: "de_poll_failures_total",
                help: "Location API polls that failed.",
                kind: "counter",
            },
            Some(metrics.poll_failures_total as f64),
        ),
        (
            Family {
                name: "de_last_poll_sim_time_seconds",
                help: "Simulation time of the latest successful poll.",
                kind: "gauge",
            },
            metrics.last_poll_sim_time_s,
        ),
    ];
    for (family, value) in plain {
        if let Some(v) = value {
            family.header(&mut out);
            let _ = writeln!(out, "{} {}", family.name, format_value(v));
        }
    }
    out
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "+Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

fn escape_label(v: &str) -> String {
    v.replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', "\\n")
}

fn escape_help(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n")
}
