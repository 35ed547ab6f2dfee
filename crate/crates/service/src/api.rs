//! HTTP routes. Bodies are JSON; errors are `{code, message, detail}`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fits_core::analysis::render_markdown;
use fits_core::engine::{to_ndjson, IssueInput};
use serde::Deserialize;
use serde_json::json;

use crate::app::{parse_severity, CommandRequest, CreateMission, Service};
use crate::error::ApiError;

/// Long-poll waits are capped at this.
pub const MAX_WAIT_S: u64 = 60;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.kind.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::malformed(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ApiError::malformed(e.body_text()))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/missions", get(list_missions).post(create_mission))
        .route("/missions/{id}", get(mission_summary))
        .route("/missions/{id}/tasks", get(tasks))
        .route("/missions/{id}/commands", post(command))
        .route("/missions/{id}/issues", post(report_issue))
        .route("/missions/{id}/issues/export", get(export_issues))
        .route("/missions/{id}/events", get(events))
        .route("/missions/{id}/telemetry", post(telemetry))
        .route("/missions/{id}/report", get(report))
        .route("/missions/{id}/close", post(close))
        .with_state(service)
}

async fn list_missions(State(s): State<Arc<Service>>) -> Response {
    Json(json!({ "missions": s.list() })).into_response()
}

async fn create_mission(State(s): State<Arc<Service>>, payload: Result<Json<CreateMission>, JsonRejection>) -> ApiResult<Response> {
    let entry = s.create(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

async fn mission_summary(State(s): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.summary(&id).await?).into_response())
}

#[derive(Deserialize)]
struct RoleQuery {
    role: Option<String>,
}

async fn tasks(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<RoleQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let role = query(q)?.role.ok_or_else(|| ApiError::malformed("`role` query parameter is required"))?;
    Ok(Json(json!({ "role": role, "tasks": s.tasks(&id, &role).await? })).into_response())
}

async fn command(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<CommandRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(payload)?;
    Ok(Json(s.command(&id, req).await?).into_response())
}

#[derive(Deserialize)]
struct IssueBody {
    #[serde(default)]
    task_id: Option<String>,
    reporter: String,
    severity: String,
    text: String,
}

async fn report_issue(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<IssueBody>, JsonRejection>,
) -> ApiResult<Response> {
    let b = body(payload)?;
    let issue = IssueInput { task_id: b.task_id, reporter: b.reporter, severity: parse_severity(&b.severity)?, text: b.text };
    let outcome = s.report_issue(&id, issue).await?;
    let issue_id = outcome
        .events
        .iter()
        .rev()
        .find_map(|e| e.payload.get("issue_id").and_then(|v| v.as_str()).map(str::to_string));
    Ok((StatusCode::CREATED, Json(json!({ "issue_id": issue_id, "seq": outcome.seq, "events": outcome.events }))).into_response())
}

async fn export_issues(State(s): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.export_issues(&id).await?).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    /// Seconds to wait for new events.
    #[serde(default)]
    wait: u64,
    #[serde(default)]
    format: Option<String>,
}

async fn events(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let wait = Duration::from_secs(q.wait.min(MAX_WAIT_S));
    let events = s.events(&id, q.since, wait).await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(json!({ "events": events })).into_response()),
        Some("ndjson") => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_ndjson(&events)).into_response()),
        Some(other) => Err(ApiError::malformed(format!("unknown format `{other}` (json, ndjson)"))),
    }
}

#[derive(Deserialize)]
struct TelemetryQuery {
    name: Option<String>,
}

async fn telemetry(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<TelemetryQuery>, QueryRejection>,
    csv: String,
) -> ApiResult<Response> {
    let name = query(q)?.name.unwrap_or_else(|| "telemetry".to_string());
    let receipt = s.upload_telemetry(&id, &name, &csv).await?;
    Ok((StatusCode::ACCEPTED, Json(receipt)).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    tolerance: Option<f64>,
    #[serde(default)]
    format: Option<String>,
}

async fn report(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let report = s.report(&id, q.tolerance).await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("md") | Some("markdown") => {
            Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], render_markdown(&report)).into_response())
        }
        Some(other) => Err(ApiError::malformed(format!("unknown format `{other}` (json, md)"))),
    }
}

#[derive(Deserialize)]
struct CloseBody {
    actor: String,
}

async fn close(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<CloseBody>, JsonRejection>,
) -> ApiResult<Response> {
    let actor = body(payload)?.actor;
    Ok(Json(s.close(&id, &actor).await?).into_response())
}

/// Serves until ctrl-c, firing due alarms every `tick` in the background.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<Service>, tick: Duration) -> std::io::Result<()> {
    let ticker = {
        let service = service.clone();
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(tick);
            loop {
                interval.tick().await;
                service.tick_all().await;
            }
        })
    };
    let result = axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    ticker.abort();
    result
}

/// Binds `addr` and serves; convenience for binaries.
pub async fn bind_and_serve(addr: SocketAddr, service: Arc<Service>, tick: Duration) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve(listener, service, tick).await
}
