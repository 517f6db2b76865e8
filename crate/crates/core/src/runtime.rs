// SPDX-License-Identifier: Apache-2.0

//! Wiring of simulator, location service, orchestrator and decision engine
//! into one tick-driven loop, plus the headless experiment runner.
//!
//! The decision engine's poll schedule is expressed in ticks, so a realtime
//! run and a fast headless run with the same inputs take identical decisions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    ConfigError, DEConfig, DEMetrics, DecisionEngine, DeploymentRef, OccupancySource,
    ScaleTarget, SourceError, StepAction, StepReport, TargetError, ZoneOccupancySample,
};
use crate::location::{LocationError, LocationService, ScenarioCatalog, SteerAck, SteerCommand, SteerError};
use crate::mobility::{ScenarioConfig, ScenarioError, Simulator};
use crate::orchestrator::{
    DeploymentState, Orchestrator, OrchestratorError, ScaleEvent, ScaleOutcome,
    DEFAULT_READINESS_LATENCY_S,
};

pub const SERIES_FILE: &str = "series.csv";
pub const ORCHESTRATOR_EVENTS_FILE: &str = "orchestrator_events.jsonl";
pub const DE_ACTIONS_FILE: &str = "de_actions.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Initial values for the scaled deployment. Namespace and name come from
/// the decision engine's target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentSeed {
    pub initial_replicas: u32,
    pub readiness_latency_s: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
}

impl Default for DeploymentSeed {
    fn default() -> Self {
        Self {
            initial_replicas: 1,
            readiness_latency_s: DEFAULT_READINESS_LATENCY_S,
            min_replicas: 1,
            max_replicas: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSteer {
    /// Applied while the clock reads this tick index, before advancing.
    pub tick: u64,
    pub command: SteerCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub decision_engine: DEConfig,
    #[serde(default)]
    pub deployment: DeploymentSeed,
    pub duration_ticks: u64,
    #[serde(default)]
    pub steering: Vec<ScheduledSteer>,
}

impl ExperimentConfig {
    /// The demo setup: 4 + 4 + 4 users on the default layout, gamma 3,
    /// replicas in [1, 2], zone3 monitored.
    pub fn demo(duration_ticks: u64) -> Self {
        Self {
            scenario: ScenarioConfig::default_macro(),
            decision_engine: DEConfig::default(),
            deployment: DeploymentSeed::default(),
            duration_ticks,
            steering: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.scenario.validate()?;
        self.decision_engine.validate()?;
        check_engine_against_scenario(&self.decision_engine, &self.scenario)?;
        if self.duration_ticks == 0 {
            return Err(ExperimentError::NoTicks);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("decision engine: {0}")]
    Config(#[from] ConfigError),
    #[error("monitored zone `{0}` is not declared by the scenario")]
    UnknownMonitoredZone(String),
    #[error("poll_period_s {period} is not a whole multiple of tick_s {tick}")]
    PollPeriod { period: f64, tick: f64 },
    #[error("deployment: {0}")]
    Deployment(#[from] OrchestratorError),
    #[error("duration_ticks must be at least 1")]
    NoTicks,
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing series: {0}")]
    Csv(#[from] csv::Error),
}

fn check_engine_against_scenario(de: &DEConfig, scenario: &ScenarioConfig) -> Result<u64, ExperimentError> {
    if !scenario.has_zone(&de.monitored_zone) {
        return Err(ExperimentError::UnknownMonitoredZone(de.monitored_zone.clone()));
    }
    poll_every_ticks(de.poll_period_s, scenario.tick_s)
}

/// Number of ticks between polls.
pub fn poll_every_ticks(poll_period_s: f64, tick_s: f64) -> Result<u64, ExperimentError> {
    let ratio = poll_period_s / tick_s;
    let k = ratio.round();
    if !(k >= 1.0 && (ratio - k).abs() <= 1e-9 * k.max(1.0)) {
        return Err(ExperimentError::PollPeriod {
            period: poll_period_s,
            tick: tick_s,
        });
    }
    Ok(k as u64)
}

/// State shared between the tick agent and concurrent readers (HTTP
/// handlers). Readers only ever see published values.
#[derive(Debug)]
pub struct Shared {
    pub location: LocationService,
    pub orchestrator: Mutex<Orchestrator>,
    metrics: RwLock<Arc<DEMetrics>>,
    de_config: RwLock<DEConfig>,
    pending_config: Mutex<Option<DEConfig>>,
    scenario_names: Vec<String>,
}

impl Shared {
    pub fn metrics(&self) -> Arc<DEMetrics> {
        Arc::clone(&self.metrics.read().expect("metrics lock poisoned"))
    }

    pub fn de_config(&self) -> DEConfig {
        self.de_config.read().expect("config lock poisoned").clone()
    }

    /// Queues a decision-engine config for the next poll. The latest queued
    /// config wins.
    pub fn queue_de_config(&self, config: DEConfig) {
        *self.pending_config.lock().expect("config queue poisoned") = Some(config);
    }

    pub fn scenario_names(&self) -> &[String] {
        &self.scenario_names
    }

    fn publish_metrics(&self, metrics: DEMetrics) {
        *self.metrics.write().expect("metrics lock poisoned") = Arc::new(metrics);
    }
}

/// Occupancy read straight from the published snapshot.
pub struct LocalLocation<'a>(pub &'a LocationService);

impl OccupancySource for LocalLocation<'_> {
    fn zone_occupancy(&mut self, zone_id: &str) -> Result<ZoneOccupancySample, SourceError> {
        let snapshot = self.0.latest().map_err(|e| match e {
            LocationError::Unavailable => SourceError::Unreachable(e.to_string()),
            other => SourceError::Rejected(other.to_string()),
        })?;
        let zone = crate::location::zone_info(&snapshot, zone_id)
            .map_err(|e| SourceError::Rejected(e.to_string()))?;
        Ok(ZoneOccupancySample {
            sim_time_s: snapshot.clock.sim_time_s,
            zone_id: zone.zone_id,
            count: zone.number_of_users,
        })
    }
}

/// Scale calls applied directly to an in-process orchestrator.
pub struct LocalOrchestrator<'a>(pub &'a Mutex<Orchestrator>);

impl ScaleTarget for LocalOrchestrator<'_> {
    fn get_scale(&mut self, target: &DeploymentRef) -> Result<(u32, u32), TargetError> {
        self.0
            .lock()
            .expect("orchestrator lock poisoned")
            .get_scale(&target.namespace, &target.name)
            .map_err(|e| TargetError::Rejected(e.to_string()))
    }

    fn set_scale(
        &mut self,
        target: &DeploymentRef,
        replicas: u32,
        reason: &str,
    ) -> Result<ScaleOutcome, TargetError> {
        self.0
            .lock()
            .expect("orchestrator lock poisoned")
            .set_scale(&target.namespace, &target.name, replicas, reason)
            .map_err(|e| TargetError::Rejected(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub sim_time_s: f64,
    pub zone_users: u32,
    pub avg_users: f64,
    pub desired_replicas: u32,
    pub ready_replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub final_sim_time_s: f64,
    pub polls: u64,
    pub poll_failures: u64,
    pub scale_actions: u64,
    pub upscales: u64,
    pub downscales: u64,
    /// Desired replicas weighted by how long each polled value held, over
    /// the span from the first poll to the end of the run.
    pub time_weighted_mean_replicas: Option<f64>,
    pub time_weighted_mean_ready_replicas: Option<f64>,
    pub min_avg_users: Option<f64>,
    pub max_avg_users: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<SeriesRow>,
    pub orchestrator_events: Vec<ScaleEvent>,
    pub de_actions: Vec<ScaleEvent>,
    pub summary: RunSummary,
}

impl RunReport {
    /// Writes the series table, both event logs and the summary into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join(SERIES_FILE))?;
        for row in &self.rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
        write_event_log(&dir.join(ORCHESTRATOR_EVENTS_FILE), &self.orchestrator_events)?;
        write_event_log(&dir.join(DE_ACTIONS_FILE), &self.de_actions)?;
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        std::fs::write(dir.join(SUMMARY_FILE), summary + "\n")?;
        Ok(())
    }
}

fn write_event_log(path: &Path, events: &[ScaleEvent]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        writeln!(w, "{}", serde_json::to_string(e).expect("event serializes"))?;
    }
    w.flush()
}

/// The single tick-advancing agent.
pub struct Runtime {
    sim: Simulator,
    catalog: ScenarioCatalog,
    shared: Arc<Shared>,
    engine: DecisionEngine,
    poll_every: u64,
    polls: u64,
    rows: Vec<SeriesRow>,
    action_sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("clock", &self.sim.clock())
            .field("poll_every", &self.poll_every)
            .field("rows", &self.rows.len())
            .finish()
    }
}

impl Runtime {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        Self::with_orchestrator(config, Orchestrator::new())
    }

    /// Like [`Runtime::new`] but with a caller-supplied (e.g. log-backed)
    /// orchestrator.
    pub fn with_orchestrator(
        config: &ExperimentConfig,
        mut orchestrator: Orchestrator,
    ) -> Result<Self, ExperimentError> {
        config.scenario.validate()?;
        config.decision_engine.validate()?;
        let poll_every = check_engine_against_scenario(&config.decision_engine, &config.scenario)?;
        let de = &config.decision_engine;
        orchestrator.create_deployment(DeploymentState {
            name: de.target_deployment.name.clone(),
            namespace: de.target_deployment.namespace.clone(),
            desired_replicas: config.deployment.initial_replicas,
            ready_replicas: config.deployment.initial_replicas,
            readiness_latency_s: config.deployment.readiness_latency_s,
            min_replicas: config.deployment.min_replicas,
            max_replicas: config.deployment.max_replicas,
        })?;
        let sim = Simulator::load_scenario(config.scenario.clone())?;
        let mut catalog = ScenarioCatalog::builtin();
        catalog.insert(config.scenario.clone());
        let engine = DecisionEngine::new(de.clone())?;

        let location = LocationService::new();
        location.publish(sim.snapshot());
        let shared = Arc::new(Shared {
            location,
            orchestrator: Mutex::new(orchestrator),
            metrics: RwLock::new(Arc::new(engine.metrics().clone())),
            de_config: RwLock::new(de.clone()),
            pending_config: Mutex::new(None),
            scenario_names: catalog.names().map(str::to_string).collect(),
        });
        Ok(Self {
            sim,
            catalog,
            shared,
            engine,
            poll_every,
            polls: 0,
            rows: Vec::new(),
            action_sink: None,
        })
    }

    /// Mirrors each applied decision-engine action as one JSON line.
    pub fn set_action_sink(&mut self, sink: Box<dyn Write + Send>) {
        self.action_sink = Some(sink);
    }

    pub fn shared(&self) -> Arc<Shared> {
        Arc::clone(&self.shared)
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn engine(&self) -> &DecisionEngine {
        &self.engine
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn poll_every(&self) -> u64 {
        self.poll_every
    }

    /// Validates a decision-engine config against the running scenario.
    pub fn check_de_config(&self, config: &DEConfig) -> Result<(), ExperimentError> {
        config.validate()?;
        check_engine_against_scenario(config, self.sim.scenario())?;
        Ok(())
    }

    /// Applies a steering command between ticks. Its effect becomes visible
    /// with the next published snapshot.
    pub fn apply_steer(&mut self, command: &SteerCommand) -> Result<SteerAck, SteerError> {
        self.sim.apply(command, &self.catalog)
    }

    /// Advances the simulator one tick and publishes the snapshot. Returns
    /// whether a poll is due at the new tick.
    pub fn advance(&mut self) -> bool {
        self.sim.tick();
        let clock = self.sim.clock();
        self.shared.location.publish(self.sim.snapshot());
        self.shared
            .orchestrator
            .lock()
            .expect("orchestrator lock poisoned")
            .advance_to(clock.sim_time_s);
        clock.tick_index.is_multiple_of(self.poll_every)
    }

    /// Runs one control step against the given adapters.
    pub fn poll_with(
        &mut self,
        source: &mut dyn OccupancySource,
        target: &mut dyn ScaleTarget,
    ) -> StepReport {
        self.apply_pending_config();
        self.polls += 1;
        let report = self.engine.control_step(source, target);
        if let StepReport::Evaluated { sample, avg, action, .. } = &report {
            let m = self.engine.metrics();
            self.rows.push(SeriesRow {
                sim_time_s: sample.sim_time_s,
                zone_users: sample.count,
                avg_users: *avg,
                desired_replicas: m.desired_replicas.unwrap_or_default(),
                ready_replicas: m.current_replicas.unwrap_or_default(),
            });
            if let (StepAction::Applied(event), Some(sink)) = (action, self.action_sink.as_mut()) {
                let line = serde_json::to_string(event).expect("event serializes");
                if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                    warn!("action log write failed: {e}");
                }
            }
        }
        self.shared.publish_metrics(self.engine.metrics().clone());
        report
    }

    /// Runs one control step against the in-process services.
    pub fn poll_local(&mut self) -> StepReport {
        let shared = Arc::clone(&self.shared);
        let mut source = LocalLocation(&shared.location);
        let mut target = LocalOrchestrator(&shared.orchestrator);
        self.poll_with(&mut source, &mut target)
    }

    /// Advances one tick and polls in-process when due.
    pub fn step(&mut self) -> Option<StepReport> {
        self.advance().then(|| self.poll_local())
    }

    pub fn summary(&self) -> RunSummary {
        let events = self
            .shared
            .orchestrator
            .lock()
            .expect("orchestrator lock poisoned")
            .list_events(None);
        let clock = self.sim.clock();
        let upscales = events.iter().filter(|e| e.to_replicas > e.from_replicas).count() as u64;
        let avgs = self.rows.iter().map(|r| r.avg_users);
        RunSummary {
            ticks: clock.tick_index,
            final_sim_time_s: clock.sim_time_s,
            polls: self.polls,
            poll_failures: self.engine.metrics().poll_failures_total,
            scale_actions: events.len() as u64,
            upscales,
            downscales: events.len() as u64 - upscales,
            time_weighted_mean_replicas: time_weighted_mean(
                &self.rows,
                clock.sim_time_s,
                |r| r.desired_replicas,
            ),
            time_weighted_mean_ready_replicas: time_weighted_mean(
                &self.rows,
                clock.sim_time_s,
                |r| r.ready_replicas,
            ),
            min_avg_users: avgs.clone().reduce(f64::min),
            max_avg_users: avgs.reduce(f64::max),
        }
    }

    pub fn finish(self) -> RunReport {
        let summary = self.summary();
        let orchestrator_events = self
            .shared
            .orchestrator
            .lock()
            .expect("orchestrator lock poisoned")
            .list_events(None);
        RunReport {
            rows: self.rows,
            orchestrator_events,
            de_actions: self.engine.actions().to_vec(),
            summary,
        }
    }

    fn apply_pending_config(&mut self) {
        let pending = self.shared.pending_config.lock().expect("config queue poisoned").take();
        let Some(config) = pending else { return };
        let applied = self
            .check_de_config(&config)
            .and_then(|_| Ok(self.engine.update_config(config.clone())?));
        match applied {
            Ok(()) => {
                self.poll_every =
                    poll_every_ticks(config.poll_period_s, self.sim.scenario().tick_s)
                        .expect("checked above");
                *self.shared.de_config.write().expect("config lock poisoned") = config;
            }
            Err(e) => warn!("discarding decision engine config: {e}"),
        }
    }
}

fn time_weighted_mean(rows: &[SeriesRow], end_s: f64, value: impl Fn(&SeriesRow) -> u32) -> Option<f64> {
    let first = rows.first()?;
    let span = end_s - first.sim_time_s;
    if span <= 0.0 {
        return Some(f64::from(value(first)));
    }
    let mut acc = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let until = rows.get(i + 1).map_or(end_s, |n| n.sim_time_s);
        acc += f64::from(value(row)) * (until - row.sim_time_s);
    }
    Some(acc / span)
}

/// Runs `config.duration_ticks` ticks as fast as possible with in-process
/// services.
pub fn run_headless(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let mut runtime = Runtime::new(config)?;
    let mut steering: Vec<&ScheduledSteer> = config.steering.iter().collect();
    steering.sort_by_key(|s| s.tick);
    let mut pending = steering.into_iter().peekable();
    for _ in 0..config.duration_ticks {
        let now = runtime.simulator().clock().tick_index;
        while let Some(s) = pending.next_if(|s| s.tick <= now) {
            if let Err(e) = runtime.apply_steer(&s.command) {
                warn!("scheduled steer at tick {} rejected: {e}", s.tick);
            }
        }
        runtime.step();
    }
    Ok(runtime.finish())
}
