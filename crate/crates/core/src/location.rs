// SPDX-License-Identifier: Apache-2.0

//! Location API subset (zone status and user lists) over simulator
//! snapshots, plus the steering commands used by operators.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::{ScenarioConfig, ScenarioError, Simulator, Snapshot, UnknownZone, UserClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserInfo {
    pub address: String,
    pub access_point_id: String,
    pub zone_id: String,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ZoneInfo {
    pub zone_id: String,
    pub number_of_access_points: u32,
    pub number_of_users: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ZoneList {
    pub zone_list: Vec<ZoneInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserList {
    pub user_list: Vec<UserInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocationError {
    #[error("no snapshot published yet")]
    Unavailable,
    #[error(transparent)]
    UnknownZone(#[from] UnknownZone),
}

pub fn zones(snapshot: &Snapshot) -> Vec<ZoneInfo> {
    snapshot
        .scenario
        .zones
        .iter()
        .map(|z| zone_info(snapshot, &z.zone_id).expect("declared zone"))
        .collect()
}

pub fn zone_info(snapshot: &Snapshot, zone_id: &str) -> Result<ZoneInfo, UnknownZone> {
    let zone = snapshot
        .scenario
        .zones
        .iter()
        .find(|z| z.zone_id == zone_id)
        .ok_or_else(|| UnknownZone(zone_id.to_string()))?;
    Ok(ZoneInfo {
        zone_id: zone.zone_id.clone(),
        number_of_access_points: zone.ap_ids.len() as u32,
        number_of_users: snapshot.zone_user_count(zone_id)? as u32,
    })
}

/// Associated users, optionally restricted to one zone. Unassociated users
/// are omitted.
pub fn users(snapshot: &Snapshot, zone_filter: Option<&str>) -> Result<Vec<UserInfo>, UnknownZone> {
    if let Some(z) = zone_filter {
        if !snapshot.scenario.has_zone(z) {
            return Err(UnknownZone(z.to_string()));
        }
    }
    let ap_zone: BTreeMap<&str, &str> = snapshot
        .scenario
        .access_points
        .iter()
        .map(|ap| (ap.ap_id.as_str(), ap.zone_id.as_str()))
        .collect();
    let timestamp = snapshot.clock.sim_time_s;
    Ok(snapshot
        .users
        .iter()
        .filter_map(|u| {
            let ap = u.association.as_deref()?;
            let zone = *ap_zone.get(ap)?;
            if zone_filter.is_some_and(|f| f != zone) {
                return None;
            }
            Some(UserInfo {
                address: u.address.clone(),
                access_point_id: ap.to_string(),
                zone_id: zone.to_string(),
                timestamp,
            })
        })
        .collect())
}

/// Publication point for snapshots. Readers get the latest `Arc<Snapshot>`;
/// a published snapshot is never mutated.
#[derive(Debug, Default)]
pub struct LocationService {
    latest: RwLock<Option<Arc<Snapshot>>>,
}

impl LocationService {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, snapshot: Snapshot) {
        *self.latest.write().expect("snapshot lock poisoned") = Some(Arc::new(snapshot));
    }

    pub fn latest(&self) -> Result<Arc<Snapshot>, LocationError> {
        self.latest
            .read()
            .expect("snapshot lock poisoned")
            .clone()
            .ok_or(LocationError::Unavailable)
    }

    pub fn get_zones(&self) -> Result<Vec<ZoneInfo>, LocationError> {
        Ok(zones(&*self.latest()?))
    }

    pub fn get_zone(&self, zone_id: &str) -> Result<ZoneInfo, LocationError> {
        Ok(zone_info(&*self.latest()?, zone_id)?)
    }

    pub fn get_users(&self, zone_filter: Option<&str>) -> Result<Vec<UserInfo>, LocationError> {
        Ok(users(&*self.latest()?, zone_filter)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SteerCommand {
    AddUser { class: UserClass },
    RemoveUser { address: String },
    SetUserCount { class: UserClass, count: u32 },
    LoadScenario { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SteerAck {
    pub total_users: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteerError {
    #[error("max users exceeded: {requested} requested, limit {max}")]
    MaxUsersExceeded { requested: u32, max: u32 },
    #[error("unknown address `{0}`")]
    UnknownAddress(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Named scenarios that `LoadScenario` can switch to.
#[derive(Debug, Clone, Default)]
pub struct ScenarioCatalog {
    scenarios: BTreeMap<String, ScenarioConfig>,
}

impl ScenarioCatalog {
    /// Catalog holding the built-in default layout.
    pub fn builtin() -> Self {
        let mut catalog = Self::default();
        catalog.insert(ScenarioConfig::default_macro());
        catalog
    }

    pub fn insert(&mut self, config: ScenarioConfig) {
        self.scenarios.insert(config.name.clone(), config);
    }

    pub fn get(&self, name: &str) -> Option<&ScenarioConfig> {
        self.scenarios.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scenarios.keys().map(String::as_str)
    }
}

impl Simulator {
    /// Applies one steering command. Either the whole command takes effect or
    /// nothing changes.
    pub fn apply(
        &mut self,
        command: &SteerCommand,
        catalog: &ScenarioCatalog,
    ) -> Result<SteerAck, SteerError> {
        let max = self.scenario().max_users;
        match command {
            SteerCommand::AddUser { class } => {
                let requested = self.user_count() as u32 + 1;
                if requested > max {
                    return Err(SteerError::MaxUsersExceeded { requested, max });
                }
                self.spawn_user(*class);
            }
            SteerCommand::RemoveUser { address } => {
                self.remove_user(address)
                    .ok_or_else(|| SteerError::UnknownAddress(address.clone()))?;
            }
            SteerCommand::SetUserCount { class, count } => {
                let current = self.class_count(*class) as u32;
                let requested = self.user_count() as u32 - current + count;
                if requested > max {
                    return Err(SteerError::MaxUsersExceeded { requested, max });
                }
                for _ in current..*count {
                    self.spawn_user(*class);
                }
                for _ in *count..current {
                    self.pop_user_of_class(*class);
                }
            }
            SteerCommand::LoadScenario { name } => {
                let config = catalog
                    .get(name)
                    .cloned()
                    .ok_or_else(|| SteerError::UnknownScenario(name.clone()))?;
                self.replace_scenario(config)?;
            }
        }
        Ok(SteerAck {
            total_users: self.user_count() as u32,
        })
    }
}
