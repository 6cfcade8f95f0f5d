//! The door controller: doorbell-to-relay pipeline, relock timer, remote
//! unlock and enrollment, all recorded in the event log.

pub mod admin;
pub mod runtime;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::clock::SharedClock;
use crate::config::SystemConfig;
use crate::events::EventLog;
use crate::hwsim::{Hardware, HwError, Input};
use crate::model::{greeting_for, DecisionReason, EventKind, EventPayload, FrameInfo, Role};
use crate::protocol::{
    CreatePersonRequest, ErrorCode, FaceApi, FaceApiError, IdentifyRequest, PersonInfo,
};
use crate::store::TrainingStatus;
use crate::vision::{self, encode_pgm, VisionError};

/// Person id reported for admin-initiated unlocks.
pub const ADMIN_PERSON_ID: &str = "admin";

/// How many times enrollment polls the training status.
const TRAINING_POLLS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "UPPERCASE")]
pub enum LockState {
    Locked,
    Unlocked { relock_at: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Grant,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub outcome: Outcome,
    pub reason: DecisionReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl AccessDecision {
    fn deny(reason: DecisionReason) -> Self {
        Self {
            outcome: Outcome::Deny,
            reason,
            person_id: None,
            confidence: None,
        }
    }

    pub fn granted(&self) -> bool {
        self.outcome == Outcome::Grant
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("Unauthorized")]
    Unauthorized,
    #[error("NoFaceFound")]
    NoFaceFound,
    #[error("CaptureFailed")]
    CaptureFailed,
    #[error("InvalidRequest: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Recognition(#[from] FaceApiError),
}

/// Single owner of the door state. Every method runs to completion before
/// the next one starts; the runtime serializes callers.
pub struct Controller<F: FaceApi> {
    config: SystemConfig,
    clock: SharedClock,
    hw: Hardware,
    faces: F,
    log: Arc<EventLog>,
    lock: LockState,
}

impl<F: FaceApi> Controller<F> {
    pub fn new(config: SystemConfig, clock: SharedClock, faces: F, log: Arc<EventLog>) -> Self {
        let hw = Hardware::new(
            clock.clone(),
            config.solenoid_latency,
            config.doorbell_debounce,
        );
        Self::with_hardware(config, hw, faces, log)
    }

    pub fn with_hardware(config: SystemConfig, hw: Hardware, faces: F, log: Arc<EventLog>) -> Self {
        Self {
            config,
            clock: hw.clock().clone(),
            hw,
            faces,
            log,
            lock: LockState::Locked,
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn state(&self) -> LockState {
        self.lock
    }

    pub fn hardware(&self) -> &Hardware {
        &self.hw
    }

    pub fn hardware_mut(&mut self) -> &mut Hardware {
        &mut self.hw
    }

    pub fn faces(&self) -> &F {
        &self.faces
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Next time `tick` has work to do.
    pub fn next_deadline(&self) -> Option<u64> {
        match self.lock {
            LockState::Locked => None,
            LockState::Unlocked { relock_at } => Some(relock_at),
        }
    }

    fn emit(&self, kind: EventKind, payload: EventPayload) {
        self.log.append(kind, payload, self.clock.as_ref());
    }

    fn authorized(&self, credential: &str) -> bool {
        bool::from(
            credential
                .as_bytes()
                .ct_eq(self.config.admin_token.as_bytes()),
        )
    }

    /// Energizes the relay until at least `relock_at`.
    fn unlock_until(&mut self, relock_at: u64) -> u64 {
        let relock_at = match self.lock {
            LockState::Unlocked { relock_at: current } => current.max(relock_at),
            LockState::Locked => relock_at,
        };
        let was_locked = self.lock == LockState::Locked;
        self.lock = LockState::Unlocked { relock_at };
        if was_locked {
            self.hw.set_relay(true);
            self.emit(
                EventKind::DoorUnlocked,
                EventPayload {
                    relock_at: Some(relock_at),
                    ..Default::default()
                },
            );
        }
        relock_at
    }

    fn relock(&mut self, detail: Option<&str>) {
        if let LockState::Unlocked { relock_at } = self.lock {
            self.lock = LockState::Locked;
            self.hw.set_relay(false);
            self.emit(
                EventKind::DoorRelocked,
                EventPayload {
                    relock_at: Some(relock_at),
                    detail: detail.map(str::to_string),
                    ..Default::default()
                },
            );
        }
    }

    /// Relocks once the deadline has passed. Returns whether it did.
    pub fn tick(&mut self) -> bool {
        match self.lock {
            LockState::Unlocked { relock_at } if self.now() >= relock_at => {
                self.relock(None);
                true
            }
            _ => false,
        }
    }

    /// Presses the doorbell and runs the pipeline if the press is accepted.
    pub fn press_doorbell(&mut self) -> Option<AccessDecision> {
        if !self.hw.press_doorbell() {
            return None;
        }
        self.process_inputs().pop()
    }

    /// Handles every queued hardware input.
    pub fn process_inputs(&mut self) -> Vec<AccessDecision> {
        let mut out = Vec::new();
        while let Some(input) = self.hw.next_input() {
            match input {
                Input::Doorbell => out.push(self.handle_doorbell()),
            }
        }
        out
    }

    fn deny(&self, reason: DecisionReason, mut payload: EventPayload) -> AccessDecision {
        payload.reason = Some(reason);
        let decision = AccessDecision {
            person_id: payload.person_id.clone(),
            confidence: payload.confidence,
            ..AccessDecision::deny(reason)
        };
        self.emit(EventKind::AccessDenied, payload);
        decision
    }

    fn no_face(&self, detail: String) -> AccessDecision {
        self.emit(
            EventKind::NoFaceFound,
            EventPayload {
                detail: Some(detail),
                ..Default::default()
            },
        );
        self.deny(DecisionReason::NoFace, EventPayload::default())
    }

    fn unavailable(&self, err: &FaceApiError) -> AccessDecision {
        self.deny(
            DecisionReason::RecognitionUnavailable,
            EventPayload {
                detail: Some(err.to_string()),
                ..Default::default()
            },
        )
    }

    /// Capture, detect and crop locally, identify remotely, then decide.
    /// Every failure becomes a denial; the door only opens on a match.
    pub fn handle_doorbell(&mut self) -> AccessDecision {
        self.emit(EventKind::DoorbellPressed, EventPayload::default());

        let frame = match self.hw.capture() {
            Ok(f) => f,
            Err(HwError::CaptureFailed) => return self.no_face("capture failed".into()),
            Err(e) => return self.no_face(e.to_string()),
        };
        self.emit(
            EventKind::FrameCaptured,
            EventPayload {
                frame: Some(FrameInfo {
                    index: self.hw.camera.captured(),
                    width: frame.width(),
                    height: frame.height(),
                }),
                ..Default::default()
            },
        );

        let face = match vision::detect_and_crop(&frame, self.config.detection_area_fraction_min) {
            Ok(face) => face,
            Err(e) => return self.no_face(e.to_string()),
        };

        // only the crop travels to the recognition service
        let detected = match self.faces.detect(&encode_pgm(&face.crop)) {
            Ok(found) => found,
            Err(e) if is_bad_image(&e) => return self.no_face(e.to_string()),
            Err(e) => {
                self.emit_face_detected(face.region);
                return self.unavailable(&e);
            }
        };
        let Some(remote) = detected.into_iter().next() else {
            return self.no_face("recognition service found no face in crop".into());
        };
        self.emit_face_detected(face.region);

        let request = IdentifyRequest {
            face_ids: vec![remote.face_id.clone()],
            person_group_id: self.config.person_group_id.clone(),
            max_candidates: self.config.max_candidates,
            confidence_threshold: self.config.identify_confidence_threshold,
        };
        let top = match self.faces.identify(&request) {
            Ok(results) => results
                .into_iter()
                .find(|r| r.face_id == remote.face_id)
                .and_then(|r| r.candidates.into_iter().next())
                .filter(|c| c.confidence >= self.config.identify_confidence_threshold),
            Err(e) => return self.unavailable(&e),
        };
        let Some(top) = top else {
            return self.deny(DecisionReason::BelowThreshold, EventPayload::default());
        };

        let person = match self
            .faces
            .get_person(&self.config.person_group_id, &top.person_id)
        {
            Ok(p) => p,
            Err(e) => return self.unavailable(&e),
        };
        let who = EventPayload {
            person_id: Some(person.person_id.clone()),
            name: Some(person.name.clone()),
            role: Some(person.role),
            confidence: Some(top.confidence),
            ..Default::default()
        };
        self.emit(EventKind::Identified, who.clone());

        match person.role {
            Role::Blacklisted => {
                self.emit(
                    EventKind::BlacklistAlert,
                    EventPayload {
                        detail: Some("blacklisted person at the door; admin notified".into()),
                        ..who.clone()
                    },
                );
                self.deny(DecisionReason::Blacklisted, who)
            }
            Role::Guest if !guest_valid(&person, self.now()) => {
                self.emit(EventKind::GuestExpired, who.clone());
                self.deny(DecisionReason::GuestExpired, who)
            }
            Role::Guest | Role::Resident => self.grant(&person, top.confidence),
        }
    }

    fn emit_face_detected(&self, region: crate::model::FaceBox) {
        self.emit(
            EventKind::FaceDetected,
            EventPayload {
                face_box: Some(region),
                ..Default::default()
            },
        );
    }

    fn grant(&mut self, person: &PersonInfo, confidence: f64) -> AccessDecision {
        let greeting = greeting_for(&person.name);
        self.emit(
            EventKind::Greeting,
            EventPayload {
                person_id: Some(person.person_id.clone()),
                greeting: Some(greeting),
                ..Default::default()
            },
        );
        let target = self.now() + self.config.relock_timeout_ms();
        let relock_at = match self.lock {
            LockState::Unlocked { relock_at } => relock_at.max(target),
            LockState::Locked => target,
        };
        self.emit(
            EventKind::AccessGranted,
            EventPayload {
                person_id: Some(person.person_id.clone()),
                name: Some(person.name.clone()),
                role: Some(person.role),
                confidence: Some(confidence),
                reason: Some(DecisionReason::Matched),
                relock_at: Some(relock_at),
                ..Default::default()
            },
        );
        self.unlock_until(relock_at);
        AccessDecision {
            outcome: Outcome::Grant,
            reason: DecisionReason::Matched,
            person_id: Some(person.person_id.clone()),
            confidence: Some(confidence),
        }
    }

    /// Opens the door for `duration_ms` (default: the relock timeout).
    pub fn remote_unlock(
        &mut self,
        credential: &str,
        duration_ms: Option<u64>,
    ) -> Result<AccessDecision, ControllerError> {
        if !self.authorized(credential) {
            return Err(ControllerError::Unauthorized);
        }
        let duration = duration_ms.unwrap_or_else(|| self.config.relock_timeout_ms());
        if duration == 0 {
            return Err(ControllerError::InvalidRequest(
                "duration must be positive".into(),
            ));
        }
        let target = self.now().saturating_add(duration);
        let relock_at = match self.lock {
            LockState::Unlocked { relock_at } => relock_at.max(target),
            LockState::Locked => target,
        };
        self.emit(
            EventKind::RemoteUnlock,
            EventPayload {
                person_id: Some(ADMIN_PERSON_ID.into()),
                relock_at: Some(relock_at),
                ..Default::default()
            },
        );
        self.unlock_until(relock_at);
        Ok(AccessDecision {
            outcome: Outcome::Grant,
            reason: DecisionReason::Matched,
            person_id: Some(ADMIN_PERSON_ID.into()),
            confidence: None,
        })
    }

    /// Captures one frame, uploads the cropped face for a new person and
    /// retrains the group. A frame without a face creates nobody.
    pub fn enroll(
        &mut self,
        credential: &str,
        name: &str,
        role: Role,
        guest_expires_at: Option<u64>,
    ) -> Result<String, ControllerError> {
        self.enroll_with_frame(credential, name, role, guest_expires_at, None)
    }

    /// Like [`enroll`](Self::enroll), but uses `frame` instead of the
    /// camera when given.
    pub fn enroll_with_frame(
        &mut self,
        credential: &str,
        name: &str,
        role: Role,
        guest_expires_at: Option<u64>,
        frame: Option<crate::model::GrayImage>,
    ) -> Result<String, ControllerError> {
        if !self.authorized(credential) {
            return Err(ControllerError::Unauthorized);
        }
        if name.trim().is_empty() {
            return Err(ControllerError::InvalidRequest(
                "name must not be empty".into(),
            ));
        }
        if !crate::model::PersonRecord::role_matches_expiry(role, guest_expires_at) {
            return Err(ControllerError::InvalidRequest(
                "guest_expires_at is required for guests and only for guests".into(),
            ));
        }

        let (frame, index) = match frame {
            Some(f) => (f, None),
            None => {
                let f = self
                    .hw
                    .capture()
                    .map_err(|_| ControllerError::CaptureFailed)?;
                (f, Some(self.hw.camera.captured()))
            }
        };
        self.emit(
            EventKind::FrameCaptured,
            EventPayload {
                frame: Some(FrameInfo {
                    index: index.unwrap_or(0),
                    width: frame.width(),
                    height: frame.height(),
                }),
                detail: Some("enrollment".into()),
                ..Default::default()
            },
        );
        let face = match vision::detect_and_crop(&frame, self.config.detection_area_fraction_min) {
            Ok(face) => face,
            Err(e) => {
                self.emit(
                    EventKind::NoFaceFound,
                    EventPayload {
                        detail: Some(format!("enrollment: {e}")),
                        ..Default::default()
                    },
                );
                return Err(match e {
                    VisionError::NoFaceFound => ControllerError::NoFaceFound,
                    other => ControllerError::InvalidRequest(other.to_string()),
                });
            }
        };

        let person_id = upload_person(
            &self.faces,
            &self.config.person_group_id,
            name,
            role,
            guest_expires_at,
            &encode_pgm(&face.crop),
        )?;
        self.emit(
            EventKind::UserEnrolled,
            EventPayload {
                person_id: Some(person_id.clone()),
                name: Some(name.to_string()),
                role: Some(role),
                face_box: Some(face.region),
                ..Default::default()
            },
        );
        Ok(person_id)
    }

    pub fn list_persons(&self, credential: &str) -> Result<Vec<PersonInfo>, ControllerError> {
        if !self.authorized(credential) {
            return Err(ControllerError::Unauthorized);
        }
        match self.faces.list_persons(&self.config.person_group_id) {
            Err(FaceApiError::Wire(w)) if w.code == ErrorCode::UnknownGroup => Ok(Vec::new()),
            other => Ok(other?),
        }
    }

    /// Removes a person and retrains so the removal takes effect.
    pub fn delete_person(
        &mut self,
        credential: &str,
        person_id: &str,
    ) -> Result<(), ControllerError> {
        if !self.authorized(credential) {
            return Err(ControllerError::Unauthorized);
        }
        let group = &self.config.person_group_id;
        self.faces.delete_person(group, person_id)?;
        self.faces.train(group)?;
        Ok(())
    }

    /// Leaves the door locked: drops the relay if it is energized.
    pub fn shutdown(&mut self) {
        self.relock(Some("shutdown"));
    }
}

fn is_bad_image(e: &FaceApiError) -> bool {
    matches!(
        e.code(),
        Some(ErrorCode::InvalidImage | ErrorCode::NoFaceFound)
    )
}

fn guest_valid(person: &PersonInfo, now: u64) -> bool {
    person.guest_expires_at.is_some_and(|exp| now < exp)
}

/// Creates the person, attaches the face and retrains the group. On a face
/// upload failure the new person is deleted again.
pub fn upload_person<F: FaceApi + ?Sized>(
    faces: &F,
    group_id: &str,
    name: &str,
    role: Role,
    guest_expires_at: Option<u64>,
    crop_pgm: &[u8],
) -> Result<String, ControllerError> {
    faces.create_group(group_id)?;
    let person_id = faces.add_person(
        group_id,
        &CreatePersonRequest {
            name: name.to_string(),
            role,
            guest_expires_at,
        },
    )?;
    if let Err(e) = faces.add_face(group_id, &person_id, crop_pgm) {
        if let Err(rollback) = faces.delete_person(group_id, &person_id) {
            tracing::error!("rollback of {person_id} failed: {rollback}");
        }
        return Err(match e.code() {
            Some(ErrorCode::NoFaceFound) => ControllerError::NoFaceFound,
            _ => e.into(),
        });
    }
    faces.train(group_id)?;
    for _ in 0..TRAINING_POLLS {
        if faces.training_status(group_id)? == TrainingStatus::Succeeded {
            return Ok(person_id);
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    Err(ControllerError::Recognition(FaceApiError::Unavailable(
        "training did not finish".into(),
    )))
}

#[cfg(test)]
mod tests;
