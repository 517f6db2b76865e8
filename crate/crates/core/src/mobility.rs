// SPDX-License-Identifier: Apache-2.0

//! Discrete-time random-waypoint mobility over a zoned plane.
//!
//! Users move in straight lines towards a waypoint at their class speed and
//! draw a fresh uniform waypoint on arrival. Each user is associated with the
//! nearest access point whose coverage radius contains it; a zone's occupancy
//! is the number of users associated with any of its access points.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

pub const DEFAULT_MAX_USERS: u32 = 12;
pub const DEFAULT_SCENARIO_NAME: &str = "4g-5g-wifi-macro";

/// Attempts made to find a covered spawn point before falling back to an
/// uncovered one.
const SPAWN_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn distance_sq(&self, other: &Position) -> f64 {
        let dx = other.x_m - self.x_m;
        let dy = other.y_m - self.y_m;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.distance_sq(other).sqrt()
    }

    fn clamped(self, width: f64, height: f64) -> Self {
        Self {
            x_m: self.x_m.clamp(0.0, width),
            y_m: self.y_m.clamp(0.0, height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserClass {
    Stationary,
    LowVelocity,
    HighVelocity,
}

impl UserClass {
    pub const ALL: [UserClass; 3] = [
        UserClass::Stationary,
        UserClass::LowVelocity,
        UserClass::HighVelocity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UserClass::Stationary => "stationary",
            UserClass::LowVelocity => "low_velocity",
            UserClass::HighVelocity => "high_velocity",
        }
    }

    pub fn is_mobile(self) -> bool {
        self != UserClass::Stationary
    }
}

impl std::fmt::Display for UserClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per user class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerClass<T> {
    #[serde(default)]
    pub stationary: T,
    #[serde(default)]
    pub low_velocity: T,
    #[serde(default)]
    pub high_velocity: T,
}

impl<T: Copy> PerClass<T> {
    pub fn get(&self, class: UserClass) -> T {
        match class {
            UserClass::Stationary => self.stationary,
            UserClass::LowVelocity => self.low_velocity,
            UserClass::HighVelocity => self.high_velocity,
        }
    }

    pub fn set(&mut self, class: UserClass, value: T) {
        match class {
            UserClass::Stationary => self.stationary = value,
            UserClass::LowVelocity => self.low_velocity = value,
            UserClass::HighVelocity => self.high_velocity = value,
        }
    }
}

impl PerClass<u32> {
    pub fn total(&self) -> u32 {
        self.stationary + self.low_velocity + self.high_velocity
    }
}

fn default_speeds() -> PerClass<f64> {
    PerClass {
        stationary: 0.0,
        low_velocity: 1.5,
        high_velocity: 15.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tech {
    #[serde(rename = "4g")]
    Lte,
    #[serde(rename = "5g")]
    Nr,
    #[serde(rename = "wifi")]
    Wifi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPoint {
    pub ap_id: String,
    pub zone_id: String,
    pub position: Position,
    pub radius_m: f64,
    pub tech: Tech,
}

impl AccessPoint {
    pub fn covers(&self, position: &Position) -> bool {
        position.distance_sq(&self.position) <= self.radius_m * self.radius_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub zone_id: String,
    #[serde(default)]
    pub ap_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub map_width_m: f64,
    pub map_height_m: f64,
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub access_points: Vec<AccessPoint>,
    #[serde(default)]
    pub user_counts: PerClass<u32>,
    #[serde(default = "default_speeds")]
    pub speeds: PerClass<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tick_s")]
    pub tick_s: f64,
    #[serde(default = "default_max_users")]
    pub max_users: u32,
}

fn default_tick_s() -> f64 {
    1.0
}

fn default_max_users() -> u32 {
    DEFAULT_MAX_USERS
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("map dimensions must be positive (got {width} x {height})")]
    InvalidMap { width: f64, height: f64 },
    #[error("tick_s must be positive (got {0})")]
    InvalidTick(f64),
    #[error("scenario declares no zones")]
    NoZones,
    #[error("duplicate zone_id `{0}`")]
    DuplicateZone(String),
    #[error("duplicate ap_id `{0}`")]
    DuplicateAccessPoint(String),
    #[error("access point `{ap_id}` names undeclared zone `{zone_id}`")]
    DanglingZone { ap_id: String, zone_id: String },
    #[error("access point `{ap_id}` has non-positive radius {radius_m}")]
    InvalidRadius { ap_id: String, radius_m: f64 },
    #[error("access point `{0}` lies outside the map")]
    AccessPointOutsideMap(String),
    #[error("zone `{zone_id}` lists unknown access point `{ap_id}`")]
    UnknownAccessPoint { zone_id: String, ap_id: String },
    #[error("access point `{ap_id}` is listed by zone `{listed_in}` but belongs to `{zone_id}`")]
    ZoneMismatch {
        ap_id: String,
        zone_id: String,
        listed_in: String,
    },
    #[error("access point `{0}` is listed by more than one zone entry")]
    AccessPointListedTwice(String),
    #[error("access point `{0}` is not listed by its zone")]
    AccessPointUnlisted(String),
    #[error("invalid speeds: stationary must be 0 and 0 < low_velocity < high_velocity")]
    InvalidSpeeds,
    #[error("{total} users exceed max_users {max}")]
    TooManyUsers { total: u32, max: u32 },
}

impl ScenarioConfig {
    /// Default desk-scale layout: 1000 m x 1000 m, four zones in a 2x2 grid
    /// (zone1 top-left, zone2 top-right, zone3 bottom-left, zone4
    /// bottom-right) with one 400 m access point at each quadrant centre,
    /// which covers the whole map. 4 + 4 + 4 users.
    pub fn default_macro() -> Self {
        let techs = [Tech::Lte, Tech::Nr, Tech::Wifi, Tech::Nr];
        let centres = [(250.0, 250.0), (750.0, 250.0), (250.0, 750.0), (750.0, 750.0)];
        let mut zones = Vec::new();
        let mut access_points = Vec::new();
        for (i, ((x, y), tech)) in centres.into_iter().zip(techs).enumerate() {
            let zone_id = format!("zone{}", i + 1);
            let ap_id = format!("ap{}", i + 1);
            zones.push(Zone {
                zone_id: zone_id.clone(),
                ap_ids: vec![ap_id.clone()],
            });
            access_points.push(AccessPoint {
                ap_id,
                zone_id,
                position: Position::new(x, y),
                radius_m: 400.0,
                tech,
            });
        }
        Self {
            name: DEFAULT_SCENARIO_NAME.to_string(),
            map_width_m: 1000.0,
            map_height_m: 1000.0,
            zones,
            access_points,
            user_counts: PerClass {
                stationary: 4,
                low_velocity: 4,
                high_velocity: 4,
            },
            speeds: default_speeds(),
            seed: 1,
            tick_s: default_tick_s(),
            max_users: DEFAULT_MAX_USERS,
        }
    }

    /// Checks every invariant and reports the first one violated.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (w, h) = (self.map_width_m, self.map_height_m);
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(ScenarioError::InvalidMap {
                width: w,
                height: h,
            });
        }
        if !(self.tick_s.is_finite() && self.tick_s > 0.0) {
            return Err(ScenarioError::InvalidTick(self.tick_s));
        }
        if self.zones.is_empty() {
            return Err(ScenarioError::NoZones);
        }
        let mut zone_ids = BTreeSet::new();
        for zone in &self.zones {
            if !zone_ids.insert(zone.zone_id.as_str()) {
                return Err(ScenarioError::DuplicateZone(zone.zone_id.clone()));
            }
        }
        let mut aps: BTreeMap<&str, &AccessPoint> = BTreeMap::new();
        for ap in &self.access_points {
            if aps.insert(ap.ap_id.as_str(), ap).is_some() {
                return Err(ScenarioError::DuplicateAccessPoint(ap.ap_id.clone()));
            }
            if !zone_ids.contains(ap.zone_id.as_str()) {
                return Err(ScenarioError::DanglingZone {
                    ap_id: ap.ap_id.clone(),
                    zone_id: ap.zone_id.clone(),
                });
            }
            if !(ap.radius_m.is_finite() && ap.radius_m > 0.0) {
                return Err(ScenarioError::InvalidRadius {
                    ap_id: ap.ap_id.clone(),
                    radius_m: ap.radius_m,
                });
            }
            let p = ap.position;
            if !(0.0..=w).contains(&p.x_m) || !(0.0..=h).contains(&p.y_m) {
                return Err(ScenarioError::AccessPointOutsideMap(ap.ap_id.clone()));
            }
        }
        let mut listed = BTreeSet::new();
        for zone in &self.zones {
            for ap_id in &zone.ap_ids {
                let Some(ap) = aps.get(ap_id.as_str()) else {
                    return Err(ScenarioError::UnknownAccessPoint {
                        zone_id: zone.zone_id.clone(),
                        ap_id: ap_id.clone(),
                    });
                };
                if ap.zone_id != zone.zone_id {
                    return Err(ScenarioError::ZoneMismatch {
                        ap_id: ap_id.clone(),
                        zone_id: ap.zone_id.clone(),
                        listed_in: zone.zone_id.clone(),
                    });
                }
                if !listed.insert(ap_id.as_str()) {
                    return Err(ScenarioError::AccessPointListedTwice(ap_id.clone()));
                }
            }
        }
        if let Some(ap) = self
            .access_points
            .iter()
            .find(|ap| !listed.contains(ap.ap_id.as_str()))
        {
            return Err(ScenarioError::AccessPointUnlisted(ap.ap_id.clone()));
        }
        let s = &self.speeds;
        if s.stationary != 0.0
            || !(s.low_velocity.is_finite() && s.high_velocity.is_finite())
            || s.low_velocity <= 0.0
            || s.low_velocity >= s.high_velocity
        {
            return Err(ScenarioError::InvalidSpeeds);
        }
        let total = self.user_counts.total();
        if total > self.max_users {
            return Err(ScenarioError::TooManyUsers {
                total,
                max: self.max_users,
            });
        }
        Ok(())
    }

    pub fn zone_of_ap(&self, ap_id: &str) -> Option<&str> {
        self.access_points
            .iter()
            .find(|ap| ap.ap_id == ap_id)
            .map(|ap| ap.zone_id.as_str())
    }

    pub fn has_zone(&self, zone_id: &str) -> bool {
        self.zones.iter().any(|z| z.zone_id == zone_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub address: String,
    pub class: UserClass,
    pub position: Position,
    pub waypoint: Position,
    pub association: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimClock {
    pub tick_index: u64,
    pub sim_time_s: f64,
}

/// Nearest covering access point; equidistant candidates resolve to the
/// lexicographically smallest `ap_id`.
pub fn associate<'a>(position: &Position, access_points: &'a [AccessPoint]) -> Option<&'a str> {
    let mut best: Option<(f64, &str)> = None;
    for ap in access_points.iter().filter(|ap| ap.covers(position)) {
        let d = position.distance_sq(&ap.position);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && ap.ap_id.as_str() < bid),
        };
        if better {
            best = Some((d, ap.ap_id.as_str()));
        }
    }
    best.map(|(_, id)| id)
}

/// Immutable view of the simulator between two ticks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub scenario: Arc<ScenarioConfig>,
    pub clock: SimClock,
    pub users: Vec<UserState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown zone `{0}`")]
pub struct UnknownZone(pub String);

impl Snapshot {
    pub fn zone_user_count(&self, zone_id: &str) -> Result<usize, UnknownZone> {
        zone_user_count(&self.scenario, &self.users, zone_id)
    }

    pub fn unassociated_count(&self) -> usize {
        self.users.iter().filter(|u| u.association.is_none()).count()
    }
}

fn zone_user_count(
    scenario: &ScenarioConfig,
    users: &[UserState],
    zone_id: &str,
) -> Result<usize, UnknownZone> {
    let zone = scenario
        .zones
        .iter()
        .find(|z| z.zone_id == zone_id)
        .ok_or_else(|| UnknownZone(zone_id.to_string()))?;
    Ok(users
        .iter()
        .filter(|u| {
            u.association
                .as_deref()
                .is_some_and(|ap| zone.ap_ids.iter().any(|id| id == ap))
        })
        .count())
}

/// Single-writer simulator state.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Arc<ScenarioConfig>,
    users: Vec<UserState>,
    clock: SimClock,
    rng: SimRng,
    next_user_seq: u32,
}

impl Simulator {
    /// Validates `config`, then places `user_counts` users (stationary, low,
    /// high, in that order). For each user the generator yields x, y and, for
    /// mobile users, the waypoint's x, y.
    pub fn load_scenario(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mut sim = Self {
            rng: SimRng::new(config.seed),
            scenario: Arc::new(config),
            users: Vec::new(),
            clock: SimClock::default(),
            next_user_seq: 1,
        };
        for class in UserClass::ALL {
            for _ in 0..sim.scenario.user_counts.get(class) {
                let position = sim.random_position();
                sim.push_user(class, position);
            }
        }
        Ok(sim)
    }

    /// Swaps in a new scenario while keeping the clock running.
    pub fn replace_scenario(&mut self, config: ScenarioConfig) -> Result<(), ScenarioError> {
        let clock = self.clock;
        *self = Self::load_scenario(config)?;
        self.clock = clock;
        Ok(())
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn class_count(&self, class: UserClass) -> usize {
        self.users.iter().filter(|u| u.class == class).count()
    }

    pub fn zone_user_count(&self, zone_id: &str) -> Result<usize, UnknownZone> {
        zone_user_count(&self.scenario, &self.users, zone_id)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            scenario: Arc::clone(&self.scenario),
            clock: self.clock,
            users: self.users.clone(),
        }
    }

    /// Advances every mobile user by one tick and recomputes associations.
    pub fn tick(&mut self) {
        let tick_s = self.scenario.tick_s;
        let (w, h) = (self.scenario.map_width_m, self.scenario.map_height_m);
        for i in 0..self.users.len() {
            let class = self.users[i].class;
            if !class.is_mobile() {
                continue;
            }
            let step = self.scenario.speeds.get(class) * tick_s;
            let (pos, wp) = (self.users[i].position, self.users[i].waypoint);
            let dist = pos.distance(&wp);
            if dist <= step {
                let next_wp = self.random_position();
                let user = &mut self.users[i];
                user.position = wp;
                user.waypoint = next_wp;
            } else {
                let moved = Position::new(
                    pos.x_m + (wp.x_m - pos.x_m) * step / dist,
                    pos.y_m + (wp.y_m - pos.y_m) * step / dist,
                );
                self.users[i].position = moved.clamped(w, h);
            }
        }
        for user in &mut self.users {
            user.association =
                associate(&user.position, &self.scenario.access_points).map(str::to_string);
        }
        self.clock.tick_index += 1;
        self.clock.sim_time_s = self.clock.tick_index as f64 * tick_s;
    }

    /// Adds a user at a random covered position (uncovered if the scenario
    /// has no reachable coverage).
    pub(crate) fn spawn_user(&mut self, class: UserClass) -> &UserState {
        let mut position = self.random_position();
        for _ in 1..SPAWN_ATTEMPTS {
            if associate(&position, &self.scenario.access_points).is_some() {
                break;
            }
            position = self.random_position();
        }
        self.push_user(class, position);
        self.users.last().expect("user just pushed")
    }

    /// Removes the most recently added user of `class`.
    pub(crate) fn pop_user_of_class(&mut self, class: UserClass) -> Option<UserState> {
        let idx = self.users.iter().rposition(|u| u.class == class)?;
        Some(self.users.remove(idx))
    }

    pub(crate) fn remove_user(&mut self, address: &str) -> Option<UserState> {
        let idx = self.users.iter().position(|u| u.address == address)?;
        Some(self.users.remove(idx))
    }

    /// Test and fixture hook: places a user at an exact position.
    pub fn insert_user_at(&mut self, class: UserClass, position: Position) -> &UserState {
        let position = position.clamped(self.scenario.map_width_m, self.scenario.map_height_m);
        self.push_user(class, position);
        self.users.last().expect("user just pushed")
    }

    fn push_user(&mut self, class: UserClass, position: Position) {
        let waypoint = if class.is_mobile() {
            self.random_position()
        } else {
            position
        };
        let address = format!("ue-{:03}", self.next_user_seq);
        self.next_user_seq += 1;
        let association = associate(&position, &self.scenario.access_points).map(str::to_string);
        self.users.push(UserState {
            address,
            class,
            position,
            waypoint,
            association,
        });
    }

    fn random_position(&mut self) -> Position {
        let x = self.rng.uniform(0.0, self.scenario.map_width_m);
        let y = self.rng.uniform(0.0, self.scenario.map_height_m);
        Position::new(x, y)
    }
}
