// SPDX-License-Identifier: Apache-2.0

//! Decision engine: polls zone occupancy, keeps a sliding-window average and
//! turns it into replica-scaling requests.
//!
//! The shipped policy is the occupancy threshold rule: one replica per
//! started multiple of `gamma`, i.e. an average at or above `gamma` asks for a
//! second replica and an average below it falls back to one. The result is
//! clamped to `[min_replicas, max_replicas]`.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{ScaleEvent, ScaleOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentRef {
    pub namespace: String,
    pub name: String,
}

impl Default for DeploymentRef {
    fn default() -> Self {
        Self {
            namespace: "default".into(),
            name: "vod".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DEConfig {
    pub monitored_zone: String,
    pub poll_period_s: f64,
    pub window_size: usize,
    pub gamma: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub cooldown_s: f64,
    pub target_deployment: DeploymentRef,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            monitored_zone: "zone3".into(),
            poll_period_s: 5.0,
            window_size: 6,
            gamma: 3.0,
            min_replicas: 1,
            max_replicas: 2,
            cooldown_s: 0.0,
            target_deployment: DeploymentRef::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("poll_period_s must be positive (got {0})")]
    PollPeriod(f64),
    #[error("window_size must be at least 1")]
    WindowSize,
    #[error("gamma must be positive (got {0})")]
    Gamma(f64),
    #[error("min_replicas must be at least 1")]
    MinReplicas,
    #[error("max_replicas {max} below min_replicas {min}")]
    ReplicaBounds { min: u32, max: u32 },
    #[error("cooldown_s must be >= 0 (got {0})")]
    Cooldown(f64),
    #[error("monitored_zone must not be empty")]
    Zone,
}

impl DEConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.poll_period_s.is_finite() && self.poll_period_s > 0.0) {
            return Err(ConfigError::PollPeriod(self.poll_period_s));
        }
        if self.window_size == 0 {
            return Err(ConfigError::WindowSize);
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if self.min_replicas < 1 {
            return Err(ConfigError::MinReplicas);
        }
        if self.max_replicas < self.min_replicas {
            return Err(ConfigError::ReplicaBounds {
                min: self.min_replicas,
                max: self.max_replicas,
            });
        }
        if !(self.cooldown_s.is_finite() && self.cooldown_s >= 0.0) {
            return Err(ConfigError::Cooldown(self.cooldown_s));
        }
        if self.monitored_zone.is_empty() {
            return Err(ConfigError::Zone);
        }
        Ok(())
    }

    /// Returns a copy with every field present in `patch` overwritten.
    pub fn patched(&self, patch: &DEConfigPatch) -> Self {
        let mut c = self.clone();
        if let Some(v) = &patch.monitored_zone {
            c.monitored_zone = v.clone();
        }
        if let Some(v) = patch.poll_period_s {
            c.poll_period_s = v;
        }
        if let Some(v) = patch.window_size {
            c.window_size = v;
        }
        if let Some(v) = patch.gamma {
            c.gamma = v;
        }
        if let Some(v) = patch.min_replicas {
            c.min_replicas = v;
        }
        if let Some(v) = patch.max_replicas {
            c.max_replicas = v;
        }
        if let Some(v) = patch.cooldown_s {
            c.cooldown_s = v;
        }
        if let Some(v) = &patch.target_deployment {
            c.target_deployment = v.clone();
        }
        c
    }
}

/// Partial update of a [`DEConfig`]; absent fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DEConfigPatch {
    pub monitored_zone: Option<String>,
    pub poll_period_s: Option<f64>,
    pub window_size: Option<usize>,
    pub gamma: Option<f64>,
    pub min_replicas: Option<u32>,
    pub max_replicas: Option<u32>,
    pub cooldown_s: Option<f64>,
    pub target_deployment: Option<DeploymentRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneOccupancySample {
    pub sim_time_s: f64,
    pub zone_id: String,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("window holds no samples")]
pub struct EmptyWindow;

/// Bounded FIFO of the most recent samples with an exact integer running sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    samples: VecDeque<ZoneOccupancySample>,
    sum: u64,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
            sum: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &ZoneOccupancySample> {
        self.samples.iter()
    }

    pub fn push(&mut self, sample: ZoneOccupancySample) {
        self.sum += u64::from(sample.count);
        self.samples.push_back(sample);
        self.evict();
    }

    /// Shrinking drops the oldest samples.
    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(1);
        self.evict();
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.sum = 0;
    }

    /// Mean of the held samples; a partially filled window averages what it has.
    pub fn average(&self) -> Result<f64, EmptyWindow> {
        if self.samples.is_empty() {
            return Err(EmptyWindow);
        }
        Ok(self.sum as f64 / self.samples.len() as f64)
    }

    fn evict(&mut self) {
        while self.samples.len() > self.capacity {
            let old = self.samples.pop_front().expect("non-empty");
            self.sum -= u64::from(old.count);
        }
    }
}

/// Maps an occupancy average to a replica count. Implementations must be
/// pure and monotone non-decreasing in `avg`.
pub trait ScalingPolicy: Send + Sync {
    fn desired_replicas(&self, avg: f64) -> u32;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub gamma: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
}

impl From<&DEConfig> for ThresholdPolicy {
    fn from(c: &DEConfig) -> Self {
        Self {
            gamma: c.gamma,
            min_replicas: c.min_replicas,
            max_replicas: c.max_replicas,
        }
    }
}

impl ScalingPolicy for ThresholdPolicy {
    fn desired_replicas(&self, avg: f64) -> u32 {
        let avg = if avg.is_nan() { 0.0 } else { avg.max(0.0) };
        let cap = self.max_replicas.max(self.min_replicas);
        // One replica plus one per threshold k * gamma <= avg that is reached.
        let levels = (avg / self.gamma).floor();
        if levels >= f64::from(cap) {
            return cap;
        }
        let mut n = levels as u32 + 1;
        // The quotient can round across a threshold; settle on the products.
        while f64::from(n) * self.gamma <= avg && n < cap {
            n += 1;
        }
        while n > 1 && f64::from(n - 1) * self.gamma > avg {
            n -= 1;
        }
        n.clamp(self.min_replicas, self.max_replicas)
    }
}

pub fn desired_replicas(avg: f64, config: &DEConfig) -> u32 {
    ThresholdPolicy::from(config).desired_replicas(avg)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("location api unreachable: {0}")]
    Unreachable(String),
    #[error("location api rejected query: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("orchestrator unreachable: {0}")]
    Unreachable(String),
    #[error("orchestrator rejected request: {0}")]
    Rejected(String),
}

/// Tier-1 sensor: current occupancy of one zone, stamped with sim time.
pub trait OccupancySource {
    fn zone_occupancy(&mut self, zone_id: &str) -> Result<ZoneOccupancySample, SourceError>;
}

/// Tier-2 actuator: the deployment scale endpoint.
pub trait ScaleTarget {
    fn get_scale(&mut self, target: &DeploymentRef) -> Result<(u32, u32), TargetError>;
    fn set_scale(
        &mut self,
        target: &DeploymentRef,
        replicas: u32,
        reason: &str,
    ) -> Result<ScaleOutcome, TargetError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEMetrics {
    pub zone: String,
    pub raw_users: Option<u32>,
    pub avg_users: Option<f64>,
    pub current_replicas: Option<u32>,
    pub desired_replicas: Option<u32>,
    pub scale_actions_total: u64,
    pub poll_failures_total: u64,
    pub last_poll_sim_time_s: Option<f64>,
}

impl DEMetrics {
    fn new(zone: &str) -> Self {
        Self {
            zone: zone.to_string(),
            raw_users: None,
            avg_users: None,
            current_replicas: None,
            desired_replicas: None,
            scale_actions_total: 0,
            poll_failures_total: 0,
            last_poll_sim_time_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepAction {
    /// Desired equals the last commanded value.
    None,
    /// A change is due but the cooldown has not elapsed.
    Cooldown { desired: u32 },
    /// The orchestrator already held the requested count.
    NoOp { replicas: u32 },
    Applied(ScaleEvent),
    Rejected { replicas: u32, error: TargetError },
}

impl StepAction {
    /// Whether `set_scale` was invoked during the step.
    pub fn called_target(&self) -> bool {
        matches!(
            self,
            StepAction::NoOp { .. } | StepAction::Applied(_) | StepAction::Rejected { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepReport {
    Skipped(SourceError),
    Evaluated {
        sample: ZoneOccupancySample,
        avg: f64,
        desired: u32,
        action: StepAction,
    },
}

pub struct DecisionEngine {
    config: DEConfig,
    custom_policy: Option<Box<dyn ScalingPolicy>>,
    window: SlidingWindow,
    last_commanded: Option<u32>,
    last_action_s: Option<f64>,
    metrics: DEMetrics,
    actions: Vec<ScaleEvent>,
}

impl std::fmt::Debug for DecisionEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DecisionEngine")
            .field("config", &self.config)
            .field("custom_policy", &self.custom_policy.is_some())
            .field("window", &self.window)
            .field("last_commanded", &self.last_commanded)
            .field("last_action_s", &self.last_action_s)
            .finish()
    }
}

impl DecisionEngine {
    pub fn new(config: DEConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            window: SlidingWindow::new(config.window_size),
            metrics: DEMetrics::new(&config.monitored_zone),
            config,
            custom_policy: None,
            last_commanded: None,
            last_action_s: None,
            actions: Vec::new(),
        })
    }

    /// Replaces the threshold rule with another policy. Bounds in the config
    /// are still applied on top of it.
    pub fn with_policy(mut self, policy: Box<dyn ScalingPolicy>) -> Self {
        self.custom_policy = Some(policy);
        self
    }

    pub fn config(&self) -> &DEConfig {
        &self.config
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn metrics(&self) -> &DEMetrics {
        &self.metrics
    }

    /// Effective scale changes issued so far, in order.
    pub fn actions(&self) -> &[ScaleEvent] {
        &self.actions
    }

    pub fn last_commanded(&self) -> Option<u32> {
        self.last_commanded
    }

    /// Applies a validated config. A zone change empties the window; a window
    /// size change keeps the newest samples.
    pub fn update_config(&mut self, config: DEConfig) -> Result<(), ConfigError> {
        config.validate()?;
        if config.monitored_zone != self.config.monitored_zone {
            self.window.clear();
            self.metrics.zone = config.monitored_zone.clone();
            self.metrics.raw_users = None;
            self.metrics.avg_users = None;
        }
        if config.target_deployment != self.config.target_deployment {
            self.last_commanded = None;
        }
        self.window.set_capacity(config.window_size);
        self.config = config;
        Ok(())
    }

    pub fn desired_for(&self, avg: f64) -> u32 {
        let raw = match &self.custom_policy {
            Some(p) => p.desired_replicas(avg),
            None => ThresholdPolicy::from(&self.config).desired_replicas(avg),
        };
        raw.clamp(self.config.min_replicas, self.config.max_replicas)
    }

    /// One poll-evaluate-act cycle. Issues at most one `set_scale`.
    pub fn control_step(
        &mut self,
        source: &mut dyn OccupancySource,
        target: &mut dyn ScaleTarget,
    ) -> StepReport {
        let sample = match source.zone_occupancy(&self.config.monitored_zone) {
            Ok(s) => s,
            Err(e) => {
                self.metrics.poll_failures_total += 1;
                warn!("poll of zone {} failed: {e}", self.config.monitored_zone);
                return StepReport::Skipped(e);
            }
        };
        let now = sample.sim_time_s;
        self.window.push(sample.clone());
        let avg = self.window.average().expect("window just received a sample");
        let desired = self.desired_for(avg);

        let cooled = self
            .last_action_s
            .is_none_or(|t| now >= t + self.config.cooldown_s);
        let action = if self.last_commanded == Some(desired) {
            StepAction::None
        } else if !cooled {
            StepAction::Cooldown { desired }
        } else {
            let reason = format!("avg={avg} gamma={}", self.config.gamma);
            match target.set_scale(&self.config.target_deployment, desired, &reason) {
                Ok(ScaleOutcome::Applied(event)) => {
                    self.last_commanded = Some(desired);
                    self.last_action_s = Some(now);
                    self.metrics.scale_actions_total += 1;
                    self.actions.push(event.clone());
                    StepAction::Applied(event)
                }
                Ok(ScaleOutcome::NoOp) => {
                    self.last_commanded = Some(desired);
                    StepAction::NoOp { replicas: desired }
                }
                Err(error) => {
                    warn!("scale to {desired} rejected: {error}");
                    StepAction::Rejected {
                        replicas: desired,
                        error,
                    }
                }
            }
        };

        match target.get_scale(&self.config.target_deployment) {
            Ok((d, r)) => {
                self.metrics.desired_replicas = Some(d);
                self.metrics.current_replicas = Some(r);
            }
            Err(e) => warn!("scale read failed: {e}"),
        }
        self.metrics.raw_users = Some(sample.count);
        self.metrics.avg_users = Some(avg);
        self.metrics.last_poll_sim_time_s = Some(now);

        StepReport::Evaluated {
            sample,
            avg,
            desired,
            action,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gamma: f64, min: u32, max: u32) -> DEConfig {
        DEConfig {
            gamma,
            min_replicas: min,
            max_replicas: max,
            ..DEConfig::default()
        }
    }

    fn sample(t: f64, count: u32) -> ZoneOccupancySample {
        ZoneOccupancySample {
            sim_time_s: t,
            zone_id: "zone3".into(),
            count,
        }
    }

    fn window_of(cap: usize, counts: &[u32]) -> SlidingWindow {
        let mut w = SlidingWindow::new(cap);
        for (i, c) in counts.iter().enumerate() {
            w.push(sample(i as f64, *c));
        }
        w
    }

    #[test]
    fn window_average_examples() {
        assert_eq!(window_of(3, &[3, 3, 3]).average().unwrap(), 3.0);
        assert_eq!(window_of(4, &[1, 2, 4, 5]).average().unwrap(), 3.0);
        assert_eq!(window_of(8, &[4]).average().unwrap(), 4.0);
        assert_eq!(SlidingWindow::new(3).average(), Err(EmptyWindow));
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = window_of(2, &[10, 0, 2]);
        assert_eq!(w.len(), 2);
        assert_eq!(w.average().unwrap(), 1.0);
        w.set_capacity(1);
        assert_eq!(w.average().unwrap(), 2.0);
    }

    #[test]
    fn policy_examples() {
        assert_eq!(desired_replicas(4.0, &cfg(3.0, 1, 10)), 2);
        assert_eq!(desired_replicas(2.0, &cfg(3.0, 1, 10)), 1);
        assert_eq!(desired_replicas(0.0, &cfg(3.0, 1, 10)), 1);
        assert_eq!(desired_replicas(0.0, &cfg(0.5, 3, 10)), 3);
        assert_eq!(desired_replicas(7.5, &cfg(3.0, 1, 2)), 2);
        assert_eq!(desired_replicas(7.5, &cfg(3.0, 1, 10)), 3);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let c = cfg(3.0, 1, 10);
        assert_eq!(desired_replicas(2.999_999, &c), 1);
        assert_eq!(desired_replicas(3.0, &c), 2);
        assert_eq!(desired_replicas(5.999_999, &c), 2);
        assert_eq!(desired_replicas(6.0, &c), 3);
    }

    #[test]
    fn policy_survives_degenerate_input() {
        let c = cfg(3.0, 1, 4);
        assert_eq!(desired_replicas(f64::NAN, &c), 1);
        assert_eq!(desired_replicas(f64::INFINITY, &c), 4);
        assert_eq!(desired_replicas(1e300, &c), 4);
    }

    #[test]
    fn config_validation() {
        assert!(DEConfig::default().validate().is_ok());
        assert_eq!(cfg(0.0, 1, 2).validate(), Err(ConfigError::Gamma(0.0)));
        assert_eq!(cfg(3.0, 0, 2).validate(), Err(ConfigError::MinReplicas));
        assert_eq!(
            cfg(3.0, 3, 2).validate(),
            Err(ConfigError::ReplicaBounds { min: 3, max: 2 })
        );
        let c = DEConfig {
            window_size: 0,
            ..DEConfig::default()
        };
        assert_eq!(c.validate(), Err(ConfigError::WindowSize));
    }

    #[test]
    fn patch_overrides_only_present_fields() {
        let patch: DEConfigPatch = serde_json::from_str(r#"{"gamma": 2}"#).unwrap();
        let c = DEConfig::default().patched(&patch);
        assert_eq!(c.gamma, 2.0);
        assert_eq!(c.window_size, 6);
        assert!(serde_json::from_str::<DEConfigPatch>(r#"{"gama": 2}"#).is_err());
    }
}
