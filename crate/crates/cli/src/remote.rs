// SPDX-License-Identifier: Apache-2.0

//! Decision-engine adapters that talk to the location API and the scale
//! endpoint over HTTP. Blocking; call them off the async runtime.

use std::time::Duration;

use edgescale_core::{
    DeploymentRef, OccupancySource, ScaleOutcome, ScaleTarget, SourceError, TargetError,
    ZoneInfo, ZoneOccupancySample,
};
use reqwest::blocking::{Client, Response};

use crate::http::{Replicas, ScaleBody, ScaleRequest, SIM_TIME_HEADER};

const TIMEOUT: Duration = Duration::from_secs(2);

fn client() -> Client {
    Client::builder()
        .timeout(TIMEOUT)
        .build()
        .expect("http client builds")
}

fn trim(base: &str) -> String {
    base.trim_end_matches('/').to_string()
}

/// Server faults count as unreachable, client faults as rejected.
enum Failure {
    Unreachable(String),
    Rejected(String),
}

fn check(resp: Result<Response, reqwest::Error>) -> Result<Response, Failure> {
    let resp = resp.map_err(|e| Failure::Unreachable(e.to_string()))?;
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let detail = format!("{status}: {}", resp.text().unwrap_or_default());
    if status.is_server_error() {
        Err(Failure::Unreachable(detail))
    } else {
        Err(Failure::Rejected(detail))
    }
}

impl From<Failure> for SourceError {
    fn from(f: Failure) -> Self {
        match f {
            Failure::Unreachable(m) => SourceError::Unreachable(m),
            Failure::Rejected(m) => SourceError::Rejected(m),
        }
    }
}

impl From<Failure> for TargetError {
    fn from(f: Failure) -> Self {
        match f {
            Failure::Unreachable(m) => TargetError::Unreachable(m),
            Failure::Rejected(m) => TargetError::Rejected(m),
        }
    }
}

pub struct RemoteLocation {
    base: String,
    client: Client,
}

impl RemoteLocation {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: trim(base_url),
            client: client(),
        }
    }
}

impl OccupancySource for RemoteLocation {
    fn zone_occupancy(&mut self, zone_id: &str) -> Result<ZoneOccupancySample, SourceError> {
        let url = format!("{}/location/v2/queries/zones/{zone_id}", self.base);
        let resp = check(self.client.get(url).send())?;
        let sim_time_s = resp
            .headers()
            .get(SIM_TIME_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| SourceError::Rejected(format!("missing {SIM_TIME_HEADER} header")))?;
        let zone: ZoneInfo = resp
            .json()
            .map_err(|e| SourceError::Rejected(e.to_string()))?;
        Ok(ZoneOccupancySample {
            sim_time_s,
            zone_id: zone.zone_id,
            count: zone.number_of_users,
        })
    }
}

pub struct RemoteOrchestrator {
    base: String,
    client: Client,
}

impl RemoteOrchestrator {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: trim(base_url),
            client: client(),
        }
    }

    fn url(&self, target: &DeploymentRef) -> String {
        format!(
            "{}/apis/apps/v1/namespaces/{}/deployments/{}/scale",
            self.base, target.namespace, target.name
        )
    }
}

impl ScaleTarget for RemoteOrchestrator {
    fn get_scale(&mut self, target: &DeploymentRef) -> Result<(u32, u32), TargetError> {
        let resp = check(self.client.get(self.url(target)).send())?;
        let body: ScaleBody = resp
            .json()
            .map_err(|e| TargetError::Rejected(e.to_string()))?;
        Ok((body.spec.replicas, body.status.replicas))
    }

    fn set_scale(
        &mut self,
        target: &DeploymentRef,
        replicas: u32,
        reason: &str,
    ) -> Result<ScaleOutcome, TargetError> {
        let req = ScaleRequest {
            spec: Replicas { replicas },
            reason: reason.to_string(),
        };
        let resp = check(self.client.put(self.url(target)).json(&req).send())?;
        let body: ScaleBody = resp
            .json()
            .map_err(|e| TargetError::Rejected(e.to_string()))?;
        Ok(match body.event.flatten() {
            Some(event) => ScaleOutcome::Applied(event),
            None => ScaleOutcome::NoOp,
        })
    }
}
