//! HTTP adapter over a [`FaceService`]. Every handler decodes the request,
//! calls the matching [`FaceApi`] operation and serializes the outcome.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use subtle::ConstantTimeEq;

use super::{
    CreatePersonRequest, ErrorCode, FaceApi, FaceApiError, FaceService, IdentifyRequest,
    PersistedFace, PersonCreated, TrainingResponse, WireError, API_KEY_HEADER,
};

#[derive(Clone)]
struct AppState {
    service: Arc<FaceService>,
    api_key: Arc<str>,
}

impl IntoResponse for WireError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

struct ApiError(FaceApiError);

impl From<FaceApiError> for ApiError {
    fn from(e: FaceApiError) -> Self {
        ApiError(e)
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self.0 {
            FaceApiError::Wire(w) => w.into_response(),
            FaceApiError::Unavailable(m) => WireError::new(ErrorCode::Internal, m).into_response(),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, WireError> {
    serde_json::from_slice(body).map_err(|e| WireError::bad_request(format!("invalid JSON: {e}")))
}

pub fn key_matches(headers: &HeaderMap, header: &str, expected: &str) -> bool {
    headers
        .get(header)
        .map(|v| bool::from(v.as_bytes().ct_eq(expected.as_bytes())))
        .unwrap_or(false)
}

async fn require_key(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if !key_matches(req.headers(), API_KEY_HEADER, &state.api_key) {
        return WireError::new(ErrorCode::Unauthorized, "missing or invalid X-Api-Key")
            .into_response();
    }
    next.run(req).await
}

async fn create_group(
    State(s): State<AppState>,
    Path(group_id): Path<String>,
) -> ApiResult<StatusCode> {
    s.service.create_group(&group_id)?;
    Ok(StatusCode::OK)
}

async fn add_person(
    State(s): State<AppState>,
    Path(group_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PersonCreated>> {
    let req: CreatePersonRequest = parse_json(&body)?;
    let person_id = s.service.add_person(&group_id, &req)?;
    Ok(Json(PersonCreated { person_id }))
}

async fn list_persons(
    State(s): State<AppState>,
    Path(group_id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(s.service.list_persons(&group_id)?).into_response())
}

async fn get_person(
    State(s): State<AppState>,
    Path((group_id, person_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    Ok(Json(s.service.get_person(&group_id, &person_id)?).into_response())
}

async fn delete_person(
    State(s): State<AppState>,
    Path((group_id, person_id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    s.service.delete_person(&group_id, &person_id)?;
    Ok(StatusCode::OK)
}

async fn add_face(
    State(s): State<AppState>,
    Path((group_id, person_id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<PersistedFace>> {
    let persisted_face_id = s.service.add_face(&group_id, &person_id, &body)?;
    Ok(Json(PersistedFace { persisted_face_id }))
}

async fn train(State(s): State<AppState>, Path(group_id): Path<String>) -> ApiResult<StatusCode> {
    s.service.train(&group_id)?;
    Ok(StatusCode::ACCEPTED)
}

async fn training(
    State(s): State<AppState>,
    Path(group_id): Path<String>,
) -> ApiResult<Json<TrainingResponse>> {
    let status = s.service.training_status(&group_id)?;
    Ok(Json(TrainingResponse { status }))
}

async fn detect(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    Ok(Json(s.service.detect(&body)?).into_response())
}

async fn identify(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: IdentifyRequest = parse_json(&body)?;
    Ok(Json(s.service.identify(&req)?).into_response())
}

async fn fallback() -> WireError {
    WireError::new(ErrorCode::NotFound, "no such endpoint")
}

/// Face protocol routes, all behind the `X-Api-Key` check.
pub fn router(service: Arc<FaceService>, api_key: &str) -> Router {
    let state = AppState {
        service,
        api_key: Arc::from(api_key),
    };
    Router::new()
        .route("/persongroups/{group_id}", put(create_group))
        .route(
            "/persongroups/{group_id}/persons",
            post(add_person).get(list_persons),
        )
        .route(
            "/persongroups/{group_id}/persons/{person_id}",
            get(get_person).delete(delete_person),
        )
        .route(
            "/persongroups/{group_id}/persons/{person_id}/persistedfaces",
            post(add_face),
        )
        .route("/persongroups/{group_id}/train", post(train))
        .route("/persongroups/{group_id}/training", get(training))
        .route("/detect", post(detect))
        .route("/identify", post(identify))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), require_key))
        .layer(axum::extract::DefaultBodyLimit::max(16 * 1024 * 1024))
        .with_state(state)
}
