// SPDX-License-Identifier: Apache-2.0

//! Zone-occupancy driven autoscaling at the mobile edge.
//!
//! A seeded random-waypoint simulator plays the role of the mobile network,
//! [`location`] answers zone and user queries over its snapshots,
//! [`orchestrator`] mocks a deployment scale endpoint, and [`engine`] closes
//! the loop: it averages the monitored zone's occupancy over a sliding window
//! and requests one replica per started multiple of the threshold `gamma`.

pub mod engine;
pub mod location;
pub mod metrics;
pub mod mobility;
pub mod orchestrator;
pub mod replay;
pub mod rng;
pub mod runtime;

pub use engine::{
    desired_replicas, DEConfig, DEConfigPatch, DEMetrics, DecisionEngine, DeploymentRef,
    OccupancySource, ScaleTarget, ScalingPolicy, SlidingWindow, SourceError, StepAction,
    StepReport, TargetError, ThresholdPolicy, ZoneOccupancySample,
};
pub use location::{
    LocationError, LocationService, ScenarioCatalog, SteerAck, SteerCommand, SteerError,
    UserInfo, UserList, ZoneInfo, ZoneList,
};
pub use metrics::render_metrics;
pub use mobility::{
    associate, AccessPoint, PerClass, Position, ScenarioConfig, ScenarioError, SimClock,
    Simulator, Snapshot, Tech, UserClass, UserState, Zone,
};
pub use orchestrator::{
    DeploymentState, Orchestrator, OrchestratorError, ScaleEvent, ScaleOutcome,
};
pub use runtime::{
    run_headless, DeploymentSeed, ExperimentConfig, ExperimentError, RunReport, RunSummary,
    Runtime, ScheduledSteer, SeriesRow, Shared,
};
