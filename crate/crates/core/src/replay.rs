// SPDX-License-Identifier: Apache-2.0

//! Offline replay of recorded occupancy samples through the decision engine
//! against a stub orchestrator.

use std::collections::VecDeque;

use crate::engine::{
    DEConfig, DecisionEngine, DeploymentRef, OccupancySource, ScaleTarget, SourceError,
    StepReport, TargetError, ZoneOccupancySample,
};
use crate::orchestrator::{ScaleEvent, ScaleOutcome};

/// Serves queued samples in order; reports the source as unreachable once
/// drained.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    samples: VecDeque<ZoneOccupancySample>,
}

impl ScriptedSource {
    pub fn new(samples: impl IntoIterator<Item = ZoneOccupancySample>) -> Self {
        Self {
            samples: samples.into_iter().collect(),
        }
    }

    pub fn push(&mut self, sample: ZoneOccupancySample) {
        self.samples.push_back(sample);
    }
}

impl OccupancySource for ScriptedSource {
    fn zone_occupancy(&mut self, _zone_id: &str) -> Result<ZoneOccupancySample, SourceError> {
        self.samples
            .pop_front()
            .ok_or_else(|| SourceError::Unreachable("script exhausted".into()))
    }
}

/// Orchestrator stand-in with instant readiness and no bounds. Records every
/// call.
#[derive(Debug, Clone)]
pub struct StubTarget {
    pub replicas: u32,
    pub now_s: f64,
    pub set_calls: u64,
    pub events: Vec<ScaleEvent>,
    /// When set, every `set_scale` is rejected.
    pub reject: bool,
}

impl StubTarget {
    pub fn new(replicas: u32) -> Self {
        Self {
            replicas,
            now_s: 0.0,
            set_calls: 0,
            events: Vec::new(),
            reject: false,
        }
    }
}

impl ScaleTarget for StubTarget {
    fn get_scale(&mut self, _target: &DeploymentRef) -> Result<(u32, u32), TargetError> {
        Ok((self.replicas, self.replicas))
    }

    fn set_scale(
        &mut self,
        target: &DeploymentRef,
        replicas: u32,
        reason: &str,
    ) -> Result<ScaleOutcome, TargetError> {
        self.set_calls += 1;
        if self.reject {
            return Err(TargetError::Rejected("stub rejects".into()));
        }
        if replicas == self.replicas {
            return Ok(ScaleOutcome::NoOp);
        }
        let event = ScaleEvent {
            timestamp: self.now_s,
            deployment: target.name.clone(),
            from_replicas: self.replicas,
            to_replicas: replicas,
            reason: reason.to_string(),
        };
        self.replicas = replicas;
        self.events.push(event.clone());
        Ok(ScaleOutcome::Applied(event))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub reports: Vec<StepReport>,
    pub events: Vec<ScaleEvent>,
    pub set_calls: u64,
}

/// Feeds each sample through one control step, with the stub clock set to the
/// sample's time.
pub fn replay_samples(
    config: &DEConfig,
    initial_replicas: u32,
    samples: &[ZoneOccupancySample],
) -> Result<ReplayOutcome, crate::engine::ConfigError> {
    let mut engine = DecisionEngine::new(config.clone())?;
    let mut target = StubTarget::new(initial_replicas);
    let mut reports = Vec::with_capacity(samples.len());
    for sample in samples {
        target.now_s = sample.sim_time_s;
        let mut source = ScriptedSource::new([sample.clone()]);
        reports.push(engine.control_step(&mut source, &mut target));
    }
    Ok(ReplayOutcome {
        reports,
        events: target.events,
        set_calls: target.set_calls,
    })
}
