// SPDX-License-Identifier: Apache-2.0

//! In-memory stand-in for a cluster's deployment scale subresource.
//!
//! Each deployment tracks a desired replica count and a ready count that
//! lags behind upscales by `readiness_latency_s`. Downscales are ready
//! immediately. Every effective change is appended to an ordered event log,
//! optionally mirrored line by line to a writer.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_READINESS_LATENCY_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentState {
    pub name: String,
    pub namespace: String,
    pub desired_replicas: u32,
    pub ready_replicas: u32,
    pub readiness_latency_s: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEvent {
    pub timestamp: f64,
    pub deployment: String,
    pub from_replicas: u32,
    pub to_replicas: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleOutcome {
    Applied(ScaleEvent),
    NoOp,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("deployment {namespace}/{name} not found")]
    NotFound { namespace: String, name: String },
    #[error("deployment {namespace}/{name} already exists")]
    AlreadyExists { namespace: String, name: String },
    #[error("replicas {requested} below min_replicas {min}")]
    BelowMin { requested: u32, min: u32 },
    #[error("replicas {requested} above max_replicas {max}")]
    AboveMax { requested: u32, max: u32 },
    #[error("invalid deployment bounds: {0}")]
    InvalidSpec(String),
    #[error("event log write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
struct Deployment {
    state: DeploymentState,
    last_change_s: f64,
    ready_at_change: u32,
}

impl Deployment {
    fn ready_at(&self, now_s: f64) -> u32 {
        let desired = self.state.desired_replicas;
        if now_s >= self.last_change_s + self.state.readiness_latency_s {
            desired
        } else {
            self.ready_at_change.min(desired)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LoggedEvent {
    seq: u64,
    event: ScaleEvent,
}

pub struct Orchestrator {
    deployments: BTreeMap<(String, String), Deployment>,
    events: Vec<LoggedEvent>,
    now_s: f64,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("deployments", &self.deployments.len())
            .field("events", &self.events.len())
            .field("now_s", &self.now_s)
            .finish()
    }
}

impl Default for Orchestrator {
    fn default() -> Self {
        Self::new()
    }
}

impl Orchestrator {
    pub fn new() -> Self {
        Self {
            deployments: BTreeMap::new(),
            events: Vec::new(),
            now_s: 0.0,
            sink: None,
        }
    }

    /// Mirrors every appended event as one JSON line to `sink`.
    pub fn with_event_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    /// Moves the orchestrator clock forward. Earlier times are ignored.
    pub fn advance_to(&mut self, now_s: f64) {
        if now_s > self.now_s {
            self.now_s = now_s;
        }
    }

    /// Registers a deployment whose initial replicas are already ready.
    pub fn create_deployment(&mut self, state: DeploymentState) -> Result<(), OrchestratorError> {
        if state.max_replicas < state.min_replicas {
            return Err(OrchestratorError::InvalidSpec(format!(
                "max_replicas {} < min_replicas {}",
                state.max_replicas, state.min_replicas
            )));
        }
        if !(state.readiness_latency_s.is_finite() && state.readiness_latency_s >= 0.0) {
            return Err(OrchestratorError::InvalidSpec(format!(
                "readiness_latency_s {} must be >= 0",
                state.readiness_latency_s
            )));
        }
        check_bounds(&state, state.desired_replicas)?;
        let key = (state.namespace.clone(), state.name.clone());
        if self.deployments.contains_key(&key) {
            return Err(OrchestratorError::AlreadyExists {
                namespace: key.0,
                name: key.1,
            });
        }
        let mut state = state;
        state.ready_replicas = state.desired_replicas;
        let deployment = Deployment {
            ready_at_change: state.desired_replicas,
            last_change_s: f64::NEG_INFINITY,
            state,
        };
        self.deployments.insert(key, deployment);
        Ok(())
    }

    /// Current state, with `ready_replicas` evaluated at the orchestrator clock.
    pub fn deployment(&self, namespace: &str, name: &str) -> Result<DeploymentState, OrchestratorError> {
        let d = self.lookup(namespace, name)?;
        let mut state = d.state.clone();
        state.ready_replicas = d.ready_at(self.now_s);
        Ok(state)
    }

    /// `(desired, ready)`.
    pub fn get_scale(&self, namespace: &str, name: &str) -> Result<(u32, u32), OrchestratorError> {
        let d = self.lookup(namespace, name)?;
        Ok((d.state.desired_replicas, d.ready_at(self.now_s)))
    }

    pub fn set_scale(
        &mut self,
        namespace: &str,
        name: &str,
        replicas: u32,
        reason: &str,
    ) -> Result<ScaleOutcome, OrchestratorError> {
        let now_s = self.now_s;
        let key = (namespace.to_string(), name.to_string());
        let d = self
            .deployments
            .get_mut(&key)
            .ok_or_else(|| OrchestratorError::NotFound {
                namespace: key.0.clone(),
                name: key.1.clone(),
            })?;
        check_bounds(&d.state, replicas)?;
        let from = d.state.desired_replicas;
        if from == replicas {
            return Ok(ScaleOutcome::NoOp);
        }
        let ready_now = d.ready_at(now_s);
        d.state.desired_replicas = replicas;
        d.ready_at_change = ready_now.min(replicas);
        d.last_change_s = now_s;
        let event = ScaleEvent {
            timestamp: now_s,
            deployment: name.to_string(),
            from_replicas: from,
            to_replicas: replicas,
            reason: reason.to_string(),
        };
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            writeln!(sink, "{line}")?;
            sink.flush()?;
        }
        let seq = self.events.len() as u64;
        self.events.push(LoggedEvent {
            seq,
            event: event.clone(),
        });
        Ok(ScaleOutcome::Applied(event))
    }

    /// Events strictly after `since` (all events when `None`), in log order.
    pub fn list_events(&self, since: Option<f64>) -> Vec<ScaleEvent> {
        let mut out: Vec<&LoggedEvent> = self
            .events
            .iter()
            .filter(|e| since.is_none_or(|t| e.event.timestamp > t))
            .collect();
        out.sort_by(|a, b| {
            a.event
                .timestamp
                .total_cmp(&b.event.timestamp)
                .then(a.seq.cmp(&b.seq))
        });
        out.into_iter().map(|e| e.event.clone()).collect()
    }

    pub fn flush(&mut self) -> Result<(), OrchestratorError> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    fn lookup(&self, namespace: &str, name: &str) -> Result<&Deployment, OrchestratorError> {
        self.deployments
            .get(&(namespace.to_string(), name.to_string()))
            .ok_or_else(|| OrchestratorError::NotFound {
                namespace: namespace.to_string(),
                name: name.to_string(),
            })
    }
}

fn check_bounds(state: &DeploymentState, replicas: u32) -> Result<(), OrchestratorError> {
    if replicas < state.min_replicas {
        return Err(OrchestratorError::BelowMin {
            requested: replicas,
            min: state.min_replicas,
        });
    }
    if replicas > state.max_replicas {
        return Err(OrchestratorError::AboveMax {
            requested: replicas,
            max: state.max_replicas,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event {index} starts at {found} replicas but the log was at {expected}")]
pub struct BrokenChain {
    pub index: usize,
    pub expected: u32,
    pub found: u32,
}

/// Rebuilds a deployment's desired replicas from its event log.
pub fn replay_desired(
    initial: u32,
    deployment: &str,
    events: &[ScaleEvent],
) -> Result<u32, BrokenChain> {
    let mut current = initial;
    for (index, e) in events.iter().enumerate().filter(|(_, e)| e.deployment == deployment) {
        if e.from_replicas != current {
            return Err(BrokenChain {
                index,
                expected: current,
                found: e.from_replicas,
            });
        }
        current = e.to_replicas;
    }
    Ok(current)
}

/// Parses a line-delimited event log.
pub fn parse_event_log(text: &str) -> Result<Vec<ScaleEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
