//! HTTP front end over a [`System`].
//!
//! Request handling is transport-neutral: [`handle_query`] and friends take
//! and return plain values, and the axum router only adapts them.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use tessera_core::{
    render_heatmap, BoundingBox, Error, ErrorClass, InfoKind, NodeStatus, Query, StageTimings, System, TimeRange,
};

#[derive(Debug, Clone, Deserialize)]
pub struct QueryRequest {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub start_time: i64,
    pub end_time: i64,
    #[serde(default)]
    pub satellite: Option<String>,
    pub info: InfoKind,
}

impl QueryRequest {
    pub fn to_query(&self) -> tessera_core::Result<Query> {
        let bbox = BoundingBox::new(self.min_lon, self.max_lon, self.min_lat, self.max_lat)?;
        let time = TimeRange::new(self.start_time, self.end_time)?;
        Query::new(bbox, time, self.satellite.clone(), self.info)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryResponse {
    pub tile_count: usize,
    pub winner: String,
    pub timings: serde_json::Value,
    pub tiles: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub data_pixels: usize,
    pub image_format: String,
    /// Heatmap as base64 PGM.
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub nodes: Vec<NodeStatus>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeRequest {
    pub node_id: u32,
}

pub fn health(system: &System) -> Health {
    let nodes = system.store().nodes();
    let live = nodes.iter().filter(|n| n.alive).count();
    let status = if live == nodes.len() {
        "ok"
    } else if live >= 1 {
        "degraded"
    } else {
        "unavailable"
    };
    Health {
        status: status.into(),
        nodes,
    }
}

fn timings_json(t: &StageTimings) -> serde_json::Value {
    serde_json::to_value(t).expect("timings serialize")
}

pub fn handle_query(system: &System, req: &QueryRequest) -> tessera_core::Result<QueryResponse> {
    let q = req.to_query()?;
    let r = system.execute_query(&q)?;
    let image = render_heatmap(&r.mosaic, q.info);
    Ok(QueryResponse {
        tile_count: r.tile_count,
        winner: r.race.winner.to_string(),
        timings: timings_json(&r.timings),
        tiles: r.tiles.iter().map(|t| t.to_string()).collect(),
        rows: r.mosaic.rows,
        cols: r.mosaic.cols,
        data_pixels: r.mosaic.data_pixels(),
        image_format: "pgm".into(),
        image_b64: STANDARD.encode(image),
    })
}

pub fn set_node(system: &System, node: u32, alive: bool) -> tessera_core::Result<NodeStatus> {
    if alive {
        system.store().restore_node(node)?;
    } else {
        system.store().fail_node(node)?;
    }
    Ok(NodeStatus {
        id: node,
        alive: system.store().is_alive(node),
    })
}

pub fn status_of(class: ErrorClass) -> StatusCode {
    match class {
        ErrorClass::Validation => StatusCode::BAD_REQUEST,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Store => StatusCode::SERVICE_UNAVAILABLE,
        ErrorClass::Timeout => StatusCode::GATEWAY_TIMEOUT,
    }
}

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(status_of(e.class()), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type Shared = State<Arc<System>>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> tessera_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn get_health(State(sys): Shared) -> Json<Health> {
    Json(health(&sys))
}

async fn post_query(
    State(sys): Shared,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || handle_query(&sys, &req)).await?))
}

async fn post_node(sys: Arc<System>, body: Result<Json<NodeRequest>, JsonRejection>, alive: bool) -> Result<Json<NodeStatus>, ApiError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || set_node(&sys, req.node_id, alive)).await?))
}

async fn post_fail(State(sys): Shared, body: Result<Json<NodeRequest>, JsonRejection>) -> Result<Json<NodeStatus>, ApiError> {
    post_node(sys, body, false).await
}

async fn post_restore(
    State(sys): Shared,
    body: Result<Json<NodeRequest>, JsonRejection>,
) -> Result<Json<NodeStatus>, ApiError> {
    post_node(sys, body, true).await
}

pub fn router(system: Arc<System>) -> Router {
    Router::new()
        .route("/v1/health", get(get_health))
        .route("/v1/query", post(post_query))
        .route("/v1/admin/fail_node", post(post_fail))
        .route("/v1/admin/restore_node", post(post_restore))
        .with_state(system)
}

/// Serves until ctrl-c.
pub async fn serve(system: Arc<System>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(system))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
