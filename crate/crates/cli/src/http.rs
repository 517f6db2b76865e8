// SPDX-License-Identifier: Apache-2.0

//! HTTP surfaces: the location API and sandbox steering, the decision
//! engine's metrics and config, and the deployment scale endpoints.
//!
//! Errors use a problem-details body `{"title", "status", "detail"}`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use edgescale_core::runtime::poll_every_ticks;
use edgescale_core::{
    location, render_metrics, DEConfig, DEConfigPatch, LocationError, OrchestratorError,
    ScaleEvent, ScaleOutcome, Shared, Snapshot, SteerAck, SteerCommand, SteerError, UserList,
    UserState, ZoneInfo, ZoneList,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

/// Carries the simulation time of the snapshot a location response was
/// computed from.
pub const SIM_TIME_HEADER: &str = "x-sim-time-s";

pub type SteerReply = oneshot::Sender<Result<SteerAck, SteerError>>;
pub type SteerSender = mpsc::UnboundedSender<(SteerCommand, SteerReply)>;
pub type SteerReceiver = mpsc::UnboundedReceiver<(SteerCommand, SteerReply)>;

pub fn steer_channel() -> (SteerSender, SteerReceiver) {
    mpsc::unbounded_channel()
}

#[derive(Clone)]
pub struct AppState {
    pub shared: Arc<Shared>,
    pub steer: SteerSender,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub title: String,
    pub status: u16,
    pub detail: String,
}

pub struct ApiError {
    status: StatusCode,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, detail: impl ToString) -> Self {
        Self {
            status,
            detail: detail.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Problem {
            title: self
                .status
                .canonical_reason()
                .unwrap_or("Error")
                .to_string(),
            status: self.status.as_u16(),
            detail: self.detail,
        };
        let mut resp = (self.status, Json(body)).into_response();
        resp.headers_mut().insert(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/problem+json"),
        );
        resp
    }
}

impl From<LocationError> for ApiError {
    fn from(e: LocationError) -> Self {
        let status = match e {
            LocationError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            LocationError::UnknownZone(_) => StatusCode::NOT_FOUND,
        };
        Self::new(status, e)
    }
}

impl From<SteerError> for ApiError {
    fn from(e: SteerError) -> Self {
        let status = match e {
            SteerError::UnknownAddress(_) | SteerError::UnknownScenario(_) => {
                StatusCode::NOT_FOUND
            }
            SteerError::MaxUsersExceeded { .. } | SteerError::Scenario(_) => {
                StatusCode::BAD_REQUEST
            }
        };
        Self::new(status, e)
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let status = match e {
            OrchestratorError::NotFound { .. } => StatusCode::NOT_FOUND,
            OrchestratorError::BelowMin { .. }
            | OrchestratorError::AboveMax { .. }
            | OrchestratorError::InvalidSpec(_)
            | OrchestratorError::AlreadyExists { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            OrchestratorError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

fn with_sim_time<T: IntoResponse>(snapshot: &Snapshot, body: T) -> Response {
    let mut resp = body.into_response();
    if let Ok(v) = HeaderValue::from_str(&snapshot.clock.sim_time_s.to_string()) {
        resp.headers_mut()
            .insert(HeaderName::from_static(SIM_TIME_HEADER), v);
    }
    resp
}

async fn get_zones(State(app): State<AppState>) -> Result<Response, ApiError> {
    let snap = app.shared.location.latest()?;
    let body = ZoneList {
        zone_list: location::zones(&snap),
    };
    Ok(with_sim_time(&snap, Json(body)))
}

async fn get_zone(
    State(app): State<AppState>,
    Path(zone_id): Path<String>,
) -> Result<Response, ApiError> {
    let snap = app.shared.location.latest()?;
    let body = location::zone_info(&snap, &zone_id).map_err(LocationError::from)?;
    Ok(with_sim_time(&snap, Json(body)))
}

#[derive(Debug, Deserialize)]
struct UserQuery {
    #[serde(rename = "zoneId")]
    zone_id: Option<String>,
}

async fn get_users(
    State(app): State<AppState>,
    Query(q): Query<UserQuery>,
) -> Result<Response, ApiError> {
    let snap = app.shared.location.latest()?;
    let user_list = location::users(&snap, q.zone_id.as_deref()).map_err(LocationError::from)?;
    Ok(with_sim_time(&snap, Json(UserList { user_list })))
}

async fn post_steer(
    State(app): State<AppState>,
    body: Result<Json<SteerCommand>, JsonRejection>,
) -> Result<Json<SteerAck>, ApiError> {
    let Json(command) = body?;
    let (tx, rx) = oneshot::channel();
    app.steer
        .send((command, tx))
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "simulation is not running"))?;
    let ack = rx
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped"))??;
    Ok(Json(ack))
}

/// Full sandbox view for the dashboard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandboxState {
    pub scenario: edgescale_core::ScenarioConfig,
    pub tick_index: u64,
    pub sim_time_s: f64,
    pub total_users: u32,
    pub users: Vec<UserState>,
    pub zones: Vec<ZoneInfo>,
    pub monitored_zone: String,
    pub scenarios: Vec<String>,
}

async fn get_state(State(app): State<AppState>) -> Result<Response, ApiError> {
    let snap = app.shared.location.latest()?;
    let body = SandboxState {
        scenario: (*snap.scenario).clone(),
        tick_index: snap.clock.tick_index,
        sim_time_s: snap.clock.sim_time_s,
        total_users: snap.users.len() as u32,
        users: snap.users.clone(),
        zones: location::zones(&snap),
        monitored_zone: app.shared.de_config().monitored_zone,
        scenarios: app.shared.scenario_names().to_vec(),
    };
    Ok(with_sim_time(&snap, Json(body)))
}

async fn get_metrics(State(app): State<AppState>) -> Response {
    let text = render_metrics(&app.shared.metrics());
    (
        [(header::CONTENT_TYPE, edgescale_core::metrics::CONTENT_TYPE)],
        text,
    )
        .into_response()
}

async fn get_config(State(app): State<AppState>) -> Json<DEConfig> {
    Json(app.shared.de_config())
}

/// Validates the merged config now; the engine adopts it at its next poll.
async fn patch_config(
    State(app): State<AppState>,
    body: Result<Json<DEConfigPatch>, JsonRejection>,
) -> Result<(StatusCode, Json<DEConfig>), ApiError> {
    let Json(patch) = body?;
    let merged = app.shared.de_config().patched(&patch);
    merged
        .validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let snap = app.shared.location.latest()?;
    if !snap.scenario.has_zone(&merged.monitored_zone) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("unknown zone `{}`", merged.monitored_zone),
        ));
    }
    poll_every_ticks(merged.poll_period_s, snap.scenario.tick_s)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    app.shared.queue_de_config(merged.clone());
    Ok((StatusCode::ACCEPTED, Json(merged)))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct Replicas {
    pub replicas: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScaleBody {
    pub spec: Replicas,
    pub status: Replicas,
    /// Present on PUT responses: the appended event, or null for a no-op.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Option<ScaleEvent>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleRequest {
    pub spec: Replicas,
    #[serde(default)]
    pub reason: String,
}

async fn get_scale(
    State(app): State<AppState>,
    Path((ns, name)): Path<(String, String)>,
) -> Result<Json<ScaleBody>, ApiError> {
    let (d, r) = app
        .shared
        .orchestrator
        .lock()
        .expect("orchestrator lock poisoned")
        .get_scale(&ns, &name)?;
    Ok(Json(ScaleBody {
        spec: Replicas { replicas: d },
        status: Replicas { replicas: r },
        event: None,
    }))
}

async fn put_scale(
    State(app): State<AppState>,
    Path((ns, name)): Path<(String, String)>,
    body: Result<Json<ScaleRequest>, JsonRejection>,
) -> Result<Json<ScaleBody>, ApiError> {
    let Json(req) = body?;
    let mut orch = app
        .shared
        .orchestrator
        .lock()
        .expect("orchestrator lock poisoned");
    let outcome = orch.set_scale(&ns, &name, req.spec.replicas, &req.reason)?;
    let (d, r) = orch.get_scale(&ns, &name)?;
    let event = match outcome {
        ScaleOutcome::Applied(e) => Some(e),
        ScaleOutcome::NoOp => None,
    };
    Ok(Json(ScaleBody {
        spec: Replicas { replicas: d },
        status: Replicas { replicas: r },
        event: Some(event),
    }))
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    since: Option<f64>,
}

async fn get_events(
    State(app): State<AppState>,
    Query(q): Query<EventQuery>,
) -> Json<Vec<ScaleEvent>> {
    Json(
        app.shared
            .orchestrator
            .lock()
            .expect("orchestrator lock poisoned")
            .list_events(q.since),
    )
}

/// Location API, sandbox steering and state.
pub fn location_routes() -> Router<AppState> {
    Router::new()
        .route("/location/v2/queries/zones", get(get_zones))
        .route("/location/v2/queries/zones/{zone_id}", get(get_zone))
        .route("/location/v2/queries/users", get(get_users))
        .route("/sandbox/v1/steer", axum::routing::post(post_steer))
        .route("/sandbox/v1/state", get(get_state))
}

/// Decision-engine metrics and runtime config.
pub fn engine_routes() -> Router<AppState> {
    Router::new()
        .route("/metrics", get(get_metrics))
        .route("/config", get(get_config).patch(patch_config))
}

/// Deployment scale subresource and the event log.
pub fn orchestrator_routes() -> Router<AppState> {
    Router::new()
        .route(
            "/apis/apps/v1/namespaces/{ns}/deployments/{name}/scale",
            get(get_scale).put(put_scale),
        )
        .route("/events", get(get_events))
}

/// Everything the dashboard talks to, on one listener. Static dashboard
/// assets are served from `dashboard_dir` when given.
pub fn sandbox_app(state: AppState, dashboard_dir: Option<PathBuf>) -> Router {
    let mut router = location_routes()
        .merge(engine_routes())
        .route("/events", get(get_events));
    if let Some(dir) = dashboard_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    router.layer(CorsLayer::permissive()).with_state(state)
}

pub fn orchestrator_app(state: AppState) -> Router {
    orchestrator_routes()
        .layer(CorsLayer::permissive())
        .with_state(state)
}
