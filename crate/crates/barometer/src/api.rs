//! HTTP routes. JSON lives under `/api`; `/statistic/{n}` serves the UI shell.

use std::path::{Component, Path as FsPath};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use crate::platform::{ApiError, ChartQuery, Platform};
use crate::ui;

type Shared = State<Arc<Platform>>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut response = (status, Json(self.body())).into_response();
        if status == StatusCode::UNAUTHORIZED {
            response
                .headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        response
    }
}

pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .route("/api/groups", get(groups))
        .route("/api/statistic/{n}", get(statistic))
        .route("/api/statistic/{n}/chart", get(chart))
        .route("/api/statistic/{n}/table", get(table))
        .route("/api/statistic/{n}/export", get(export))
        .route("/api/indicators", get(indicators))
        .route("/api/survey/responses", post(submit_survey))
        .route("/api/admin/refresh/{source_id}", post(refresh))
        .route("/api/admin/reload-snapshots", post(reload_snapshots))
        .route("/api/admin/survey/republish", post(republish_survey))
        .route("/healthz", get(health))
        .route("/", get(home))
        .route("/statistic/{n}", get(statistic_page))
        .route("/assets/{*path}", get(asset))
        .fallback(not_found)
        .with_state(platform)
}

fn variable_number(raw: &str) -> Result<u32, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::new(404, "not_found", format!("variable {raw} not found")))
}

async fn groups(State(p): Shared) -> Response {
    Json(p.groups()).into_response()
}

async fn statistic(State(p): Shared, Path(n): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(p.statistic(variable_number(&n)?)?).into_response())
}

async fn chart(
    State(p): Shared,
    Path(n): Path<String>,
    Query(q): Query<ChartQuery>,
) -> Result<Response, ApiError> {
    Ok(Json(p.chart(variable_number(&n)?, &q)?).into_response())
}

async fn table(
    State(p): Shared,
    Path(n): Path<String>,
    Query(q): Query<ChartQuery>,
) -> Result<Response, ApiError> {
    Ok(Json(p.table(variable_number(&n)?, &q)?).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
    #[serde(flatten)]
    chart: ChartQuery,
}

async fn export(
    State(p): Shared,
    Path(n): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let export = p.export(
        variable_number(&n)?,
        q.format.as_deref().unwrap_or("csv"),
        &q.chart,
    )?;
    let disposition = format!("attachment; filename=\"{}\"", export.filename);
    Ok((
        [
            (header::CONTENT_TYPE, export.content_type.to_owned()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        export.body,
    )
        .into_response())
}

#[derive(Deserialize)]
struct WindowQuery {
    from: Option<String>,
    to: Option<String>,
}

async fn indicators(State(p): Shared, Query(q): Query<WindowQuery>) -> Result<Response, ApiError> {
    Ok(Json(p.indicators(q.from.as_deref(), q.to.as_deref())?).into_response())
}

/// The body is parsed here rather than by an extractor so that rejection
/// messages cannot quote submitted content.
async fn submit_survey(State(p): Shared, body: Bytes) -> Result<Response, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(&body)
        .map_err(|_| ApiError::new(422, "schema_violation", "body is not a JSON document"))?;
    let receipt = p.submit_survey(&value, chrono::Utc::now())?;
    Ok((StatusCode::ACCEPTED, Json(receipt)).into_response())
}

fn authorization(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(500, "internal", e.to_string()))?
}

async fn refresh(
    State(p): Shared,
    headers: HeaderMap,
    Path(source_id): Path<String>,
) -> Result<Response, ApiError> {
    p.check_admin(authorization(&headers))?;
    let report = blocking(move || p.refresh(&source_id, chrono::Utc::now())).await?;
    Ok(Json(report).into_response())
}

async fn reload_snapshots(State(p): Shared, headers: HeaderMap) -> Result<Response, ApiError> {
    p.check_admin(authorization(&headers))?;
    let added = blocking(move || p.reload_snapshots()).await?;
    Ok(Json(serde_json::json!({ "added": added })).into_response())
}

async fn republish_survey(State(p): Shared, headers: HeaderMap) -> Result<Response, ApiError> {
    p.check_admin(authorization(&headers))?;
    let outcome = blocking(move || p.republish_survey(chrono::Utc::now())).await?;
    Ok(Json(outcome).into_response())
}

async fn health(State(p): Shared) -> Response {
    Json(p.health()).into_response()
}

async fn home() -> Html<String> {
    Html(ui::shell(None))
}

async fn statistic_page(State(p): Shared, Path(n): Path<String>) -> Response {
    match n
        .parse::<u32>()
        .ok()
        .filter(|n| p.catalog().get_variable(*n).is_ok())
    {
        Some(n) => Html(ui::shell(Some(n))).into_response(),
        None => (StatusCode::NOT_FOUND, Html(ui::not_found())).into_response(),
    }
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("html") => "text/html; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("woff2") => "font/woff2",
        _ => "application/octet-stream",
    }
}

async fn asset(State(p): Shared, Path(rel): Path<String>) -> Response {
    let rel = FsPath::new(&rel);
    let safe = rel.components().all(|c| matches!(c, Component::Normal(_)));
    let Some(dir) = p.ui_dir().filter(|_| safe) else {
        return not_found().await;
    };
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => not_found().await,
    }
}

async fn not_found() -> Response {
    ApiError::new(404, "not_found", "no such route").into_response()
}
