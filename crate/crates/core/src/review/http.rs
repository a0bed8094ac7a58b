use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ImageKind, ItemStatus, ReviewError, ReviewService, Side};
use crate::synth::HumanVerdict;

/// Header carrying the session token; `?session=` works too.
pub const SESSION_HEADER: &str = "x-session";

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::UnknownItem(_) | Self::UnknownTask(_) | Self::Exhausted(_) | Self::NoData => StatusCode::NOT_FOUND,
            Self::AlreadyDecided(_) | Self::AlreadySubmitted(_) => StatusCode::CONFLICT,
            Self::WrongSession(_) => StatusCode::FORBIDDEN,
            Self::UnknownSession(_) | Self::MissingSession => StatusCode::UNAUTHORIZED,
            Self::Invalid(_) => StatusCode::BAD_REQUEST,
            Self::CorruptLog { .. } | Self::Io { .. } | Self::Synth(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.tag(), "message": self.to_string() }))).into_response()
    }
}

type Shared = State<Arc<ReviewService>>;
type ApiResult<T> = Result<T, ReviewError>;

#[derive(Deserialize, Default)]
struct SessionQuery {
    session: Option<String>,
    format: Option<String>,
}

fn session_of(headers: &HeaderMap, q: &SessionQuery) -> ApiResult<String> {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or_else(|| q.session.clone())
        .filter(|s| !s.is_empty())
        .ok_or(ReviewError::MissingSession)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ReviewError::Invalid(format!("body: {e}")))
}

async fn mint_session(State(svc): Shared) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(json!({ "session": svc.mint_session()? })))
}

#[derive(Serialize)]
struct ItemView {
    item_id: String,
    #[serde(flatten)]
    status: ItemStatus,
    composite_url: String,
    real_url: String,
    mask_url: String,
}

async fn next_review(State(svc): Shared, headers: HeaderMap, Query(q): Query<SessionQuery>) -> ApiResult<Json<ItemView>> {
    let item = svc.next_review(&session_of(&headers, &q)?)?;
    let id = &item.item_id;
    Ok(Json(ItemView {
        composite_url: format!("/img/composite/{id}"),
        real_url: format!("/img/real/{id}"),
        mask_url: format!("/img/mask/{id}"),
        item_id: item.item_id.clone(),
        status: item.status,
    }))
}

async fn review_stats(State(svc): Shared) -> Json<serde_json::Value> {
    let (pending, accepted, rejected) = svc.state().item_counts();
    Json(json!({ "pending": pending, "accepted": accepted, "rejected": rejected }))
}

async fn submit_verdict(State(svc): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let verdict: HumanVerdict = parse_body(&body)?;
    let status = svc.submit_verdict(&id, verdict)?;
    let mut v = serde_json::to_value(status).expect("status serializes");
    v["item_id"] = json!(id);
    Ok(Json(v))
}

async fn next_compare(State(svc): Shared, headers: HeaderMap, Query(q): Query<SessionQuery>) -> ApiResult<Json<serde_json::Value>> {
    let task = svc.next_comparison(&session_of(&headers, &q)?)?;
    let id = &task.task_id;
    Ok(Json(json!({
        "task_id": id,
        "duel_id": task.duel_id,
        "left_url": format!("/img/left/{id}"),
        "right_url": format!("/img/right/{id}"),
        "served": task.served,
        "quota": task.quota,
    })))
}

#[derive(Deserialize)]
struct Choice {
    winner: Side,
}

async fn submit_compare(
    State(svc): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<SessionQuery>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let session = session_of(&headers, &q)?;
    let choice: Choice = parse_body(&body)?;
    svc.submit_comparison(&session, &id, choice.winner)?;
    Ok(Json(json!({ "task_id": id, "recorded": true })))
}

async fn export(State(svc): Shared, Query(q): Query<SessionQuery>) -> ApiResult<Response> {
    if q.format.as_deref() == Some("json") {
        let m = svc.comparison_matrix()?;
        let n = m.methods().len();
        let wins: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| m.wins(i, j)).collect()).collect();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (m.wins(i, j), m.wins(j, i));
                if a + b > 0 {
                    pairs.push(json!({ "method_a": m.methods()[i], "method_b": m.methods()[j], "a_wins": a, "b_wins": b }));
                }
            }
        }
        let body = json!({ "methods": m.methods(), "wins": wins, "pairs": pairs, "total": m.total() });
        return Ok(Json(body).into_response());
    }
    let csv = svc.export_csv()?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn image(State(svc): Shared, Path((kind, id)): Path<(String, String)>) -> ApiResult<Response> {
    let kind: ImageKind = serde_json::from_value(json!(kind))
        .map_err(|_| ReviewError::Invalid(format!("image kind `{kind}`")))?;
    let path = svc.image_path(kind, &id)?;
    let bytes = std::fs::read(&path).map_err(|source| ReviewError::Io { path: path.clone(), source })?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => "image/x-portable-pixmap",
        _ => "image/png",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

/// All routes over a shared service.
pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/api/session", post(mint_session))
        .route("/api/review/next", get(next_review))
        .route("/api/review/stats", get(review_stats))
        .route("/api/review/{id}/verdict", post(submit_verdict))
        .route("/api/compare/next", get(next_compare))
        .route("/api/compare/{id}", post(submit_compare))
        .route("/api/export/comparisons", get(export))
        .route("/img/{kind}/{id}", get(image))
        .with_state(service)
}

/// Serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, service: Arc<ReviewService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
