//! Admin HTTP API in front of the controller event loop. Every route
//! requires the `X-Admin-Token` header.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use super::runtime::{Command, ControllerHandle, Stopped};
use super::{AccessDecision, ControllerError};
use crate::events::EventLog;
use crate::model::{DoorEvent, Role};
use crate::protocol::server::key_matches;
use crate::protocol::FaceApiError;
use crate::vision::decode_pgm;

pub const ADMIN_TOKEN_HEADER: &str = "X-Admin-Token";

#[derive(Clone)]
struct AdminState {
    handle: ControllerHandle,
    token: Arc<str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

struct AdminError(StatusCode, ErrorBody);

impl AdminError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        AdminError(
            status,
            ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        )
    }
}

impl IntoResponse for AdminError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Stopped> for AdminError {
    fn from(_: Stopped) -> Self {
        AdminError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "Stopped",
            "controller is shutting down",
        )
    }
}

impl From<ControllerError> for AdminError {
    fn from(e: ControllerError) -> Self {
        let msg = e.to_string();
        match e {
            ControllerError::Unauthorized => {
                AdminError::new(StatusCode::UNAUTHORIZED, "Unauthorized", msg)
            }
            ControllerError::NoFaceFound => {
                AdminError::new(StatusCode::BAD_REQUEST, "NoFaceFound", msg)
            }
            ControllerError::CaptureFailed => {
                AdminError::new(StatusCode::CONFLICT, "CaptureFailed", msg)
            }
            ControllerError::InvalidRequest(_) => {
                AdminError::new(StatusCode::BAD_REQUEST, "BadRequest", msg)
            }
            ControllerError::Recognition(FaceApiError::Wire(w)) => AdminError::new(
                StatusCode::from_u16(w.http_status).unwrap_or(StatusCode::BAD_GATEWAY),
                &w.code.to_string(),
                w.message,
            ),
            ControllerError::Recognition(FaceApiError::Unavailable(_)) => AdminError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "RecognitionUnavailable",
                msg,
            ),
        }
    }
}

type AdminResult<T> = Result<T, AdminError>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> AdminResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        AdminError::new(
            StatusCode::BAD_REQUEST,
            "BadRequest",
            format!("invalid JSON: {e}"),
        )
    })
}

async fn require_token(State(s): State<AdminState>, req: Request, next: Next) -> Response {
    if !key_matches(req.headers(), ADMIN_TOKEN_HEADER, &s.token) {
        return AdminError::new(
            StatusCode::UNAUTHORIZED,
            "Unauthorized",
            "missing or invalid X-Admin-Token",
        )
        .into_response();
    }
    next.run(req).await
}

async fn get_state(State(s): State<AdminState>) -> AdminResult<Response> {
    let snap = s.handle.request(|reply| Command::State { reply }).await?;
    Ok(Json(snap).into_response())
}

#[derive(Debug, Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since_seq: u64,
}

async fn get_events(
    State(s): State<AdminState>,
    Query(q): Query<SinceQuery>,
) -> Json<Vec<DoorEvent>> {
    Json(s.handle.log().since(q.since_seq))
}

struct StreamState {
    log: Arc<EventLog>,
    rx: broadcast::Receiver<DoorEvent>,
    pending: VecDeque<DoorEvent>,
    last_sent: u64,
}

/// Backlog after `since`, then live events, each exactly once and in
/// sequence order.
pub fn event_stream(log: Arc<EventLog>, since: u64) -> impl Stream<Item = DoorEvent> {
    let (backlog, rx) = log.subscribe_from(since);
    let state = StreamState {
        log,
        rx,
        pending: backlog.into(),
        last_sent: since,
    };
    stream::unfold(state, |mut st| async move {
        loop {
            if let Some(ev) = st.pending.pop_front() {
                if ev.seq <= st.last_sent {
                    continue;
                }
                st.last_sent = ev.seq;
                return Some((ev, st));
            }
            match st.rx.recv().await {
                Ok(ev) => st.pending.push_back(ev),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    // fell behind the channel: refill from the log itself
                    st.pending = st.log.since(st.last_sent).into();
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    })
}

async fn stream_events(
    State(s): State<AdminState>,
    Query(q): Query<SinceQuery>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let resume = headers
        .get("Last-Event-ID")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    let since = resume.unwrap_or(q.since_seq).max(q.since_seq);
    let events = event_stream(s.handle.log().clone(), since);
    let sse = futures::StreamExt::map(events, |ev| {
        Ok(SseEvent::default()
            .id(ev.seq.to_string())
            .data(serde_json::to_string(&ev).expect("event serializes")))
    });
    Sse::new(sse).keep_alive(KeepAlive::default())
}

fn bearer(headers: &HeaderMap) -> String {
    headers
        .get(ADMIN_TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlockRequest {
    #[serde(default)]
    pub duration_ms: Option<u64>,
}

async fn unlock(
    State(s): State<AdminState>,
    headers: HeaderMap,
    body: Bytes,
) -> AdminResult<Json<AccessDecision>> {
    let req: UnlockRequest = if body.is_empty() {
        UnlockRequest::default()
    } else {
        parse_json(&body)?
    };
    let credential = bearer(&headers);
    let decision = s
        .handle
        .request(|reply| Command::Unlock {
            credential,
            duration_ms: req.duration_ms,
            reply,
        })
        .await??;
    Ok(Json(decision))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollRequest {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub guest_expires_at: Option<u64>,
    /// Plain (P2) PGM text used instead of a camera capture.
    #[serde(default)]
    pub image: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Enrolled {
    pub person_id: String,
}

async fn enroll(
    State(s): State<AdminState>,
    headers: HeaderMap,
    body: Bytes,
) -> AdminResult<Json<Enrolled>> {
    let req: EnrollRequest = parse_json(&body)?;
    let frame = match &req.image {
        Some(text) => Some(decode_pgm(text.as_bytes()).map_err(|e| {
            AdminError::new(StatusCode::BAD_REQUEST, "InvalidImage", e.to_string())
        })?),
        None => None,
    };
    let credential = bearer(&headers);
    let person_id = s
        .handle
        .request(|reply| Command::Enroll {
            credential,
            name: req.name,
            role: req.role,
            guest_expires_at: req.guest_expires_at,
            frame,
            reply,
        })
        .await??;
    Ok(Json(Enrolled { person_id }))
}

async fn list_persons(State(s): State<AdminState>, headers: HeaderMap) -> AdminResult<Response> {
    let credential = bearer(&headers);
    let persons = s
        .handle
        .request(|reply| Command::ListPersons { credential, reply })
        .await??;
    Ok(Json(persons).into_response())
}

async fn delete_person(
    State(s): State<AdminState>,
    headers: HeaderMap,
    Path(person_id): Path<String>,
) -> AdminResult<StatusCode> {
    let credential = bearer(&headers);
    s.handle
        .request(|reply| Command::DeletePerson {
            credential,
            person_id,
            reply,
        })
        .await??;
    Ok(StatusCode::OK)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DoorbellResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<AccessDecision>,
}

/// Test hook: presses the doorbell. A PGM body is queued on the camera
/// first.
async fn doorbell(State(s): State<AdminState>, body: Bytes) -> AdminResult<Json<DoorbellResponse>> {
    let frame =
        if body.is_empty() {
            None
        } else {
            Some(decode_pgm(&body).map_err(|e| {
                AdminError::new(StatusCode::BAD_REQUEST, "InvalidImage", e.to_string())
            })?)
        };
    let decision = s
        .handle
        .request(|reply| Command::Doorbell { frame, reply })
        .await?;
    Ok(Json(DoorbellResponse {
        accepted: decision.is_some(),
        decision,
    }))
}

async fn fallback() -> AdminError {
    AdminError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router(handle: ControllerHandle, admin_token: &str) -> Router {
    let state = AdminState {
        handle,
        token: Arc::from(admin_token),
    };
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/events", get(get_events))
        .route("/api/events/stream", get(stream_events))
        .route("/api/unlock", post(unlock))
        .route("/api/enroll", post(enroll))
        .route("/api/persons", get(list_persons))
        .route("/api/persons/{person_id}", delete(delete_person))
        .route("/api/doorbell", post(doorbell))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(axum::extract::DefaultBodyLimit::max(16 * 1024 * 1024))
        .with_state(state)
}
