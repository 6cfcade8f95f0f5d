//! Blocking HTTP client for the face protocol.
//!
//! Each request times out after [`REQUEST_TIMEOUT`]. Connection failures,
//! timeouts and 5xx answers are retried once; 4xx answers never are. When
//! both attempts fail the caller sees [`FaceApiError::Unavailable`].

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    CreatePersonRequest, DetectedFace, ErrorCode, FaceApi, FaceApiError, IdentifyRequest,
    IdentifyResult, PersistedFace, PersonCreated, PersonInfo, TrainingResponse, WireError,
    API_KEY_HEADER,
};
use crate::store::TrainingStatus;

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(2);
pub const MAX_ATTEMPTS: usize = 2;

#[derive(Debug, Clone)]
pub struct FaceClient {
    http: Client,
    base: String,
    api_key: String,
}

enum Body {
    Empty,
    Json(Vec<u8>),
    Image(Vec<u8>),
}

impl FaceClient {
    pub fn new(base_url: &str, api_key: &str) -> Result<Self, FaceApiError> {
        let http = Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| FaceApiError::Unavailable(format!("client setup: {e}")))?;
        Ok(Self {
            http,
            base: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn send(&self, method: Method, path: &str, body: &Body) -> Result<Vec<u8>, FaceApiError> {
        let url = format!("{}{}", self.base, path);
        let mut last_failure = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let mut req = self
                .http
                .request(method.clone(), &url)
                .header(API_KEY_HEADER, &self.api_key);
            req = match body {
                Body::Empty => req,
                Body::Json(b) => req
                    .header("content-type", "application/json")
                    .body(b.clone()),
                Body::Image(b) => req
                    .header("content-type", "application/octet-stream")
                    .body(b.clone()),
            };
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    tracing::debug!("{method} {path} attempt {attempt} failed: {e}");
                    last_failure = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let bytes = match resp.bytes() {
                Ok(b) => b.to_vec(),
                Err(e) => {
                    last_failure = e.to_string();
                    continue;
                }
            };
            if status >= 500 {
                last_failure = format!("HTTP {status}");
                continue;
            }
            if status >= 400 {
                let mut err: WireError = serde_json::from_slice(&bytes).unwrap_or_else(|_| {
                    WireError::new(
                        ErrorCode::BadRequest,
                        String::from_utf8_lossy(&bytes).into_owned(),
                    )
                });
                err.http_status = status;
                return Err(err.into());
            }
            return Ok(bytes);
        }
        Err(FaceApiError::Unavailable(format!(
            "{method} {path}: {last_failure}"
        )))
    }

    fn call<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Body,
    ) -> Result<T, FaceApiError> {
        let bytes = self.send(method, path, &body)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| FaceApiError::Unavailable(format!("malformed response from {path}: {e}")))
    }

    fn json<B: Serialize>(body: &B) -> Body {
        Body::Json(serde_json::to_vec(body).expect("request serializes"))
    }
}

impl FaceApi for FaceClient {
    fn create_group(&self, group_id: &str) -> Result<(), FaceApiError> {
        self.send(
            Method::PUT,
            &format!("/persongroups/{group_id}"),
            &Body::Empty,
        )
        .map(|_| ())
    }

    fn add_person(
        &self,
        group_id: &str,
        req: &CreatePersonRequest,
    ) -> Result<String, FaceApiError> {
        let created: PersonCreated = self.call(
            Method::POST,
            &format!("/persongroups/{group_id}/persons"),
            Self::json(req),
        )?;
        Ok(created.person_id)
    }

    fn add_face(
        &self,
        group_id: &str,
        person_id: &str,
        pgm: &[u8],
    ) -> Result<String, FaceApiError> {
        let face: PersistedFace = self.call(
            Method::POST,
            &format!("/persongroups/{group_id}/persons/{person_id}/persistedfaces"),
            Body::Image(pgm.to_vec()),
        )?;
        Ok(face.persisted_face_id)
    }

    fn get_person(&self, group_id: &str, person_id: &str) -> Result<PersonInfo, FaceApiError> {
        self.call(
            Method::GET,
            &format!("/persongroups/{group_id}/persons/{person_id}"),
            Body::Empty,
        )
    }

    fn list_persons(&self, group_id: &str) -> Result<Vec<PersonInfo>, FaceApiError> {
        self.call(
            Method::GET,
            &format!("/persongroups/{group_id}/persons"),
            Body::Empty,
        )
    }

    fn delete_person(&self, group_id: &str, person_id: &str) -> Result<(), FaceApiError> {
        self.send(
            Method::DELETE,
            &format!("/persongroups/{group_id}/persons/{person_id}"),
            &Body::Empty,
        )
        .map(|_| ())
    }

    fn train(&self, group_id: &str) -> Result<(), FaceApiError> {
        self.send(
            Method::POST,
            &format!("/persongroups/{group_id}/train"),
            &Body::Empty,
        )
        .map(|_| ())
    }

    fn training_status(&self, group_id: &str) -> Result<TrainingStatus, FaceApiError> {
        let r: TrainingResponse = self.call(
            Method::GET,
            &format!("/persongroups/{group_id}/training"),
            Body::Empty,
        )?;
        Ok(r.status)
    }

    fn detect(&self, pgm: &[u8]) -> Result<Vec<DetectedFace>, FaceApiError> {
        self.call(Method::POST, "/detect", Body::Image(pgm.to_vec()))
    }

    fn identify(&self, req: &IdentifyRequest) -> Result<Vec<IdentifyResult>, FaceApiError> {
        self.call(Method::POST, "/identify", Self::json(req))
    }
}
