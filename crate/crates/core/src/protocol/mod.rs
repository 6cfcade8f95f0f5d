//! The face protocol: the HTTP boundary between the door and the
//! recognition service.
//!
//! [`FaceApi`] is the operation set. [`FaceService`] implements it in
//! process, [`server`] exposes a `FaceService` over HTTP and
//! [`FaceClient`] speaks to that server.

pub mod client;
pub mod server;
pub mod service;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FaceBox, Role};
use crate::store::{IdentifyCandidate, StoreError, TrainingStatus};
use crate::vision::VisionError;

pub use client::FaceClient;
pub use service::FaceService;

/// Header carrying the service key.
pub const API_KEY_HEADER: &str = "X-Api-Key";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidImage,
    NoFaceFound,
    UnknownPerson,
    UnknownGroup,
    NotTrained,
    FaceIdExpired,
    PersonWithoutFace,
    Unauthorized,
    BadRequest,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::Unauthorized => 401,
            ErrorCode::UnknownPerson | ErrorCode::UnknownGroup | ErrorCode::NotFound => 404,
            ErrorCode::Internal => 500,
            _ => 400,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Error body `{code, message}` plus the HTTP status it travels with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{code} ({http_status}): {message}")]
pub struct WireError {
    #[serde(skip)]
    pub http_status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            http_status: code.http_status(),
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }
}

impl From<VisionError> for WireError {
    fn from(e: VisionError) -> Self {
        match e {
            VisionError::NoFaceFound => WireError::new(ErrorCode::NoFaceFound, "no face found"),
            VisionError::InvalidImage(r) => WireError::new(ErrorCode::InvalidImage, r),
            VisionError::InvalidBox(b) => {
                WireError::new(ErrorCode::InvalidImage, format!("invalid box {b:?}"))
            }
        }
    }
}

impl From<StoreError> for WireError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownGroup(_) => WireError::new(ErrorCode::UnknownGroup, msg),
            StoreError::UnknownPerson(_) => WireError::new(ErrorCode::UnknownPerson, msg),
            StoreError::RoleExpiryMismatch(_) | StoreError::DegenerateDescriptor => {
                WireError::bad_request(msg)
            }
            StoreError::Vision(v) => v.into(),
            StoreError::PersonWithoutFace(_) => WireError::new(ErrorCode::PersonWithoutFace, msg),
            StoreError::NotTrained(_) => WireError::new(ErrorCode::NotTrained, msg),
            StoreError::StoreCorrupt(_) | StoreError::Io { .. } => {
                WireError::new(ErrorCode::Internal, msg)
            }
        }
    }
}

/// What a caller of the recognition service can observe going wrong.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaceApiError {
    /// The service answered with an error body.
    #[error(transparent)]
    Wire(#[from] WireError),
    /// The service could not be reached or kept failing.
    #[error("RecognitionUnavailable: {0}")]
    Unavailable(String),
}

impl FaceApiError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            FaceApiError::Wire(w) => Some(w.code),
            FaceApiError::Unavailable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatePersonRequest {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guest_expires_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonCreated {
    pub person_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedFace {
    pub persisted_face_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingResponse {
    pub status: TrainingStatus,
}

/// Person as listed by the service (descriptors stay server-side).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonInfo {
    pub person_id: String,
    pub name: String,
    pub role: Role,
    pub enrolled_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guest_expires_at: Option<u64>,
    pub face_count: usize,
}

impl From<&crate::model::PersonRecord> for PersonInfo {
    fn from(p: &crate::model::PersonRecord) -> Self {
        PersonInfo {
            person_id: p.person_id.clone(),
            name: p.name.clone(),
            role: p.role,
            enrolled_at: p.enrolled_at,
            guest_expires_at: p.guest_expires_at,
            face_count: p.descriptors.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedFace {
    pub face_id: String,
    pub face_rectangle: FaceBox,
}

fn default_max_candidates() -> u32 {
    1
}

fn default_threshold() -> f64 {
    crate::config::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyRequest {
    pub face_ids: Vec<String>,
    pub person_group_id: String,
    #[serde(default = "default_max_candidates")]
    pub max_candidates: u32,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyResult {
    pub face_id: String,
    pub candidates: Vec<IdentifyCandidate>,
}

/// Operations of the recognition service.
pub trait FaceApi: Send + Sync {
    /// Idempotent.
    fn create_group(&self, group_id: &str) -> Result<(), FaceApiError>;
    fn add_person(&self, group_id: &str, req: &CreatePersonRequest)
        -> Result<String, FaceApiError>;
    /// `pgm` is an encoded PGM image; the service detects and crops the face.
    fn add_face(&self, group_id: &str, person_id: &str, pgm: &[u8])
        -> Result<String, FaceApiError>;
    fn get_person(&self, group_id: &str, person_id: &str) -> Result<PersonInfo, FaceApiError>;
    fn list_persons(&self, group_id: &str) -> Result<Vec<PersonInfo>, FaceApiError>;
    fn delete_person(&self, group_id: &str, person_id: &str) -> Result<(), FaceApiError>;
    fn train(&self, group_id: &str) -> Result<(), FaceApiError>;
    fn training_status(&self, group_id: &str) -> Result<TrainingStatus, FaceApiError>;
    fn detect(&self, pgm: &[u8]) -> Result<Vec<DetectedFace>, FaceApiError>;
    fn identify(&self, req: &IdentifyRequest) -> Result<Vec<IdentifyResult>, FaceApiError>;
}

impl<T: FaceApi + ?Sized> FaceApi for std::sync::Arc<T> {
    fn create_group(&self, group_id: &str) -> Result<(), FaceApiError> {
        (**self).create_group(group_id)
    }
    fn add_person(
        &self,
        group_id: &str,
        req: &CreatePersonRequest,
    ) -> Result<String, FaceApiError> {
        (**self).add_person(group_id, req)
    }
    fn add_face(
        &self,
        group_id: &str,
        person_id: &str,
        pgm: &[u8],
    ) -> Result<String, FaceApiError> {
        (**self).add_face(group_id, person_id, pgm)
    }
    fn get_person(&self, group_id: &str, person_id: &str) -> Result<PersonInfo, FaceApiError> {
        (**self).get_person(group_id, person_id)
    }
    fn list_persons(&self, group_id: &str) -> Result<Vec<PersonInfo>, FaceApiError> {
        (**self).list_persons(group_id)
    }
    fn delete_person(&self, group_id: &str, person_id: &str) -> Result<(), FaceApiError> {
        (**self).delete_person(group_id, person_id)
    }
    fn train(&self, group_id: &str) -> Result<(), FaceApiError> {
        (**self).train(group_id)
    }
    fn training_status(&self, group_id: &str) -> Result<TrainingStatus, FaceApiError> {
        (**self).training_status(group_id)
    }
    fn detect(&self, pgm: &[u8]) -> Result<Vec<DetectedFace>, FaceApiError> {
        (**self).detect(pgm)
    }
    fn identify(&self, req: &IdentifyRequest) -> Result<Vec<IdentifyResult>, FaceApiError> {
        (**self).identify(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_body_shape() {
        let e = WireError::new(ErrorCode::FaceIdExpired, "face id f1 expired");
        assert_eq!(e.http_status, 400);
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"code":"FaceIdExpired","message":"face id f1 expired"}"#
        );
        assert_eq!(ErrorCode::Unauthorized.http_status(), 401);
        assert_eq!(ErrorCode::UnknownGroup.http_status(), 404);
    }

    #[test]
    fn identify_request_defaults() {
        let req: IdentifyRequest =
            serde_json::from_str(r#"{"face_ids":["f1"],"person_group_id":"home"}"#).unwrap();
        assert_eq!(req.max_candidates, 1);
        assert_eq!(req.confidence_threshold, 0.8);
    }
}
