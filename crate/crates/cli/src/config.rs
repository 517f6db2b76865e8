// SPDX-License-Identifier: Apache-2.0

//! Run files (TOML) and flag/env overrides.
//!
//! A run file has optional `[scenario]`, `[decision_engine]`, `[deployment]`
//! and `[run]` tables plus `[[steering]]` entries. The scenario can live in
//! its own file instead, referenced by `scenario_file` relative to the run
//! file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use edgescale_core::{DEConfig, DeploymentSeed, ExperimentConfig, ScenarioConfig, ScheduledSteer};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_LOCATION_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_ORCHESTRATOR_ADDR: &str = "127.0.0.1:8081";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("run file needs either a [scenario] table or scenario_file, not both or neither")]
    ScenarioSource,
    #[error("invalid address `{0}`")]
    Address(String),
    #[error("location and orchestrator servers need distinct addresses (both {0})")]
    SameAddress(SocketAddr),
    #[error("headless runs need a tick count: pass --ticks or set run.duration_ticks")]
    NoDuration,
    #[error(transparent)]
    Experiment(#[from] edgescale_core::ExperimentError),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    scenario: Option<ScenarioConfig>,
    scenario_file: Option<PathBuf>,
    #[serde(default)]
    decision_engine: DEConfig,
    #[serde(default)]
    deployment: DeploymentSeed,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    steering: Vec<ScheduledSteer>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    duration_ticks: Option<u64>,
    location_addr: Option<String>,
    orchestrator_addr: Option<String>,
    output_dir: Option<PathBuf>,
    realtime: Option<bool>,
    dashboard_dir: Option<PathBuf>,
    location_url: Option<String>,
    orchestrator_url: Option<String>,
}

/// Values supplied on the command line or through `EDGESCALE_*` variables.
/// Each one replaces the matching run-file field.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub zone: Option<String>,
    pub poll_period_s: Option<f64>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
    pub min_replicas: Option<u32>,
    pub max_replicas: Option<u32>,
    pub cooldown_s: Option<f64>,
    pub namespace: Option<String>,
    pub deployment: Option<String>,
    pub ticks: Option<u64>,
    pub out: Option<PathBuf>,
    pub location_addr: Option<String>,
    pub orchestrator_addr: Option<String>,
    pub dashboard_dir: Option<PathBuf>,
    pub location_url: Option<String>,
    pub orchestrator_url: Option<String>,
    pub fast: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Ticks to run; `None` runs a live session until interrupted.
    pub duration_ticks: Option<u64>,
    pub location_addr: SocketAddr,
    pub orchestrator_addr: SocketAddr,
    pub output_dir: PathBuf,
    pub realtime: bool,
    pub dashboard_dir: Option<PathBuf>,
    pub location_url: Option<String>,
    pub orchestrator_url: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, path, base, overrides)
    }

    pub fn from_toml(
        text: &str,
        origin: &Path,
        base_dir: &Path,
        overrides: &Overrides,
    ) -> Result<Self, ConfigError> {
        let file: RunFile = parse(text, origin)?;
        let mut scenario = match (file.scenario, file.scenario_file) {
            (Some(s), None) => s,
            (None, Some(rel)) => {
                let p = base_dir.join(rel);
                let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Read {
                    path: p.clone(),
                    source,
                })?;
                parse(&text, &p)?
            }
            _ => return Err(ConfigError::ScenarioSource),
        };

        let mut de = file.decision_engine;
        let o = overrides;
        if let Some(v) = o.gamma {
            de.gamma = v;
        }
        if let Some(v) = &o.zone {
            de.monitored_zone = v.clone();
        }
        if let Some(v) = o.poll_period_s {
            de.poll_period_s = v;
        }
        if let Some(v) = o.window {
            de.window_size = v;
        }
        if let Some(v) = o.min_replicas {
            de.min_replicas = v;
        }
        if let Some(v) = o.max_replicas {
            de.max_replicas = v;
        }
        if let Some(v) = o.cooldown_s {
            de.cooldown_s = v;
        }
        if let Some(v) = &o.namespace {
            de.target_deployment.namespace = v.clone();
        }
        if let Some(v) = &o.deployment {
            de.target_deployment.name = v.clone();
        }
        if let Some(v) = o.seed {
            scenario.seed = v;
        }

        let run = file.run;
        let duration_ticks = o.ticks.or(run.duration_ticks);
        let location_addr = addr(
            o.location_addr
                .as_deref()
                .or(run.location_addr.as_deref())
                .unwrap_or(DEFAULT_LOCATION_ADDR),
        )?;
        let orchestrator_addr = addr(
            o.orchestrator_addr
                .as_deref()
                .or(run.orchestrator_addr.as_deref())
                .unwrap_or(DEFAULT_ORCHESTRATOR_ADDR),
        )?;
        if location_addr == orchestrator_addr && location_addr.port() != 0 {
            return Err(ConfigError::SameAddress(location_addr));
        }

        let experiment = ExperimentConfig {
            scenario,
            decision_engine: de,
            deployment: file.deployment,
            duration_ticks: duration_ticks.unwrap_or(1),
            steering: file.steering,
        };
        experiment.validate()?;
        Ok(Self {
            experiment,
            duration_ticks,
            location_addr,
            orchestrator_addr,
            output_dir: o
                .out
                .clone()
                .or(run.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            realtime: !o.fast && run.realtime.unwrap_or(true),
            dashboard_dir: o.dashboard_dir.clone().or(run.dashboard_dir),
            location_url: o.location_url.clone().or(run.location_url),
            orchestrator_url: o.orchestrator_url.clone().or(run.orchestrator_url),
        })
    }

    /// The experiment with its tick count fixed, as headless runs need.
    pub fn headless(&self) -> Result<ExperimentConfig, ConfigError> {
        match self.duration_ticks {
            Some(n) if n >= 1 => Ok(ExperimentConfig {
                duration_ticks: n,
                ..self.experiment.clone()
            }),
            _ => Err(ConfigError::NoDuration),
        }
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn addr(s: &str) -> Result<SocketAddr, ConfigError> {
    s.parse().map_err(|_| ConfigError::Address(s.to_string()))
}
