use std::sync::Arc;

use super::*;
use crate::clock::ManualClock;
use crate::hwsim::{Level, SolenoidPosition};
use crate::model::GrayImage;
use crate::protocol::client::FaceClient;
use crate::protocol::service::{FaceService, ServiceSettings};
use crate::store::Store;
use crate::synth::{blank_frame, face_frame};

const TOKEN: &str = "admin-secret";

fn service(clock: &ManualClock) -> Arc<FaceService> {
    Arc::new(FaceService::new(
        Store::default(),
        Arc::new(clock.clone()),
        ServiceSettings::default(),
    ))
}

fn rig() -> (ManualClock, Controller<Arc<FaceService>>) {
    let clock = ManualClock::new(0);
    let faces = service(&clock);
    let c = Controller::new(
        SystemConfig::for_tests(),
        Arc::new(clock.clone()),
        faces,
        Arc::new(EventLog::new()),
    );
    (clock, c)
}

fn enroll(
    c: &mut Controller<Arc<FaceService>>,
    name: &str,
    role: Role,
    exp: Option<u64>,
    id: u64,
) -> String {
    c.enroll_with_frame(TOKEN, name, role, exp, Some(face_frame(id, 0)))
        .unwrap()
}

fn ring(c: &mut Controller<Arc<FaceService>>, frame: GrayImage) -> AccessDecision {
    c.hardware_mut().camera.push(frame);
    c.press_doorbell().expect("press accepted")
}

fn kinds_since(c: &Controller<Arc<FaceService>>, seq: u64) -> Vec<EventKind> {
    c.log().since(seq).into_iter().map(|e| e.kind).collect()
}

fn never_high(c: &Controller<Arc<FaceService>>) -> bool {
    c.hardware()
        .relay
        .pin()
        .history()
        .iter()
        .all(|(_, l)| *l != Level::High)
}

#[test]
fn resident_is_greeted_and_let_in() {
    let (clock, mut c) = rig();
    let pid = enroll(&mut c, "Karan", Role::Resident, None, 1);
    clock.set(1000);
    let mark = c.log().last_seq();
    let d = ring(&mut c, face_frame(1, 5));
    assert!(d.granted());
    assert_eq!(d.reason, DecisionReason::Matched);
    assert_eq!(d.person_id.as_deref(), Some(pid.as_str()));
    assert_eq!(
        kinds_since(&c, mark),
        vec![
            EventKind::DoorbellPressed,
            EventKind::FrameCaptured,
            EventKind::FaceDetected,
            EventKind::Identified,
            EventKind::Greeting,
            EventKind::AccessGranted,
            EventKind::DoorUnlocked,
        ]
    );
    let greeting = c
        .log()
        .since(mark)
        .into_iter()
        .find(|e| e.kind == EventKind::Greeting)
        .unwrap();
    assert_eq!(greeting.payload.greeting.as_deref(), Some("welcome Karan"));
    assert_eq!(c.state(), LockState::Unlocked { relock_at: 6000 });
    assert!(c.hardware().relay.energized());
}

#[test]
fn relock_after_timeout_with_solenoid_latency() {
    let (clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    assert!(ring(&mut c, face_frame(1, 2)).granted());
    clock.set(49);
    assert_eq!(c.hardware().read_solenoid(), SolenoidPosition::Extended);
    clock.set(50);
    assert_eq!(c.hardware().read_solenoid(), SolenoidPosition::Retracted);
    clock.set(4999);
    assert!(!c.tick());
    clock.set(5000);
    assert!(c.tick());
    assert_eq!(c.state(), LockState::Locked);
    let last = c.log().snapshot().pop().unwrap();
    assert_eq!((last.kind, last.ts_ms), (EventKind::DoorRelocked, 5000));
    clock.set(5049);
    assert_eq!(c.hardware().read_solenoid(), SolenoidPosition::Retracted);
    clock.set(5050);
    assert_eq!(c.hardware().read_solenoid(), SolenoidPosition::Extended);
    // ticking while locked does nothing
    let n = c.log().len();
    assert!(!c.tick());
    assert_eq!(c.log().len(), n);
}

#[test]
fn second_grant_extends_the_deadline() {
    let (clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    assert!(ring(&mut c, face_frame(1, 1)).granted());
    clock.set(3000);
    let mark = c.log().last_seq();
    assert!(ring(&mut c, face_frame(1, 2)).granted());
    assert_eq!(c.state(), LockState::Unlocked { relock_at: 8000 });
    // already open: no second DoorUnlocked
    assert!(!kinds_since(&c, mark).contains(&EventKind::DoorUnlocked));
    clock.set(5000);
    assert!(!c.tick());
    clock.set(8000);
    assert!(c.tick());
    assert_eq!(c.hardware().relay.pin().history().len(), 2);
}

#[test]
fn uniform_frame_is_denied_for_no_face() {
    let (_clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    let mark = c.log().last_seq();
    let d = ring(&mut c, blank_frame(128));
    assert_eq!(
        (d.outcome, d.reason),
        (Outcome::Deny, DecisionReason::NoFace)
    );
    assert_eq!(
        kinds_since(&c, mark),
        vec![
            EventKind::DoorbellPressed,
            EventKind::FrameCaptured,
            EventKind::NoFaceFound,
            EventKind::AccessDenied,
        ]
    );
    assert_eq!(c.state(), LockState::Locked);
    assert!(never_high(&c));
}

#[test]
fn empty_camera_is_denied_for_no_face() {
    let (_clock, mut c) = rig();
    let d = c.press_doorbell().unwrap();
    assert_eq!(d.reason, DecisionReason::NoFace);
    assert_eq!(
        kinds_since(&c, 0),
        vec![
            EventKind::DoorbellPressed,
            EventKind::NoFaceFound,
            EventKind::AccessDenied,
        ]
    );
}

#[test]
fn stranger_is_below_threshold() {
    let (_clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    let d = ring(&mut c, face_frame(9, 0));
    assert_eq!(d.reason, DecisionReason::BelowThreshold);
    assert!(never_high(&c));
}

#[test]
fn no_group_yet_is_below_threshold() {
    let (_clock, mut c) = rig();
    let d = ring(&mut c, face_frame(1, 0));
    assert_eq!(d.outcome, Outcome::Deny);
    assert_ne!(d.reason, DecisionReason::Matched);
    assert!(never_high(&c));
}

#[test]
fn blacklisted_raises_one_alert() {
    let (_clock, mut c) = rig();
    let pid = enroll(&mut c, "Mallory", Role::Blacklisted, None, 4);
    let mark = c.log().last_seq();
    let d = ring(&mut c, face_frame(4, 3));
    assert_eq!(d.reason, DecisionReason::Blacklisted);
    assert_eq!(d.person_id.as_deref(), Some(pid.as_str()));
    let kinds = kinds_since(&c, mark);
    assert_eq!(
        kinds
            .iter()
            .filter(|k| **k == EventKind::BlacklistAlert)
            .count(),
        1
    );
    assert_eq!(kinds.last(), Some(&EventKind::AccessDenied));
    assert!(never_high(&c));
}

#[test]
fn guest_valid_until_expiry() {
    let (clock, mut c) = rig();
    enroll(&mut c, "Asha", Role::Guest, Some(10_000), 2);
    clock.set(9_999);
    assert!(ring(&mut c, face_frame(2, 1)).granted());
    clock.set(20_000);
    c.tick();
    let mark = c.log().last_seq();
    let d = ring(&mut c, face_frame(2, 2));
    assert_eq!(d.reason, DecisionReason::GuestExpired);
    assert!(kinds_since(&c, mark).contains(&EventKind::GuestExpired));
    assert_eq!(c.state(), LockState::Locked);
}

#[test]
fn expired_guest_never_opens() {
    let (clock, mut c) = rig();
    enroll(&mut c, "Asha", Role::Guest, Some(500), 2);
    clock.set(500);
    assert_eq!(
        ring(&mut c, face_frame(2, 1)).reason,
        DecisionReason::GuestExpired
    );
    assert!(never_high(&c));
}

#[test]
fn recognition_down_is_fail_secure() {
    let clock = ManualClock::new(0);
    // nothing listens on port 9 of localhost
    let client = FaceClient::new("http://127.0.0.1:9", "face-key").unwrap();
    let mut c = Controller::new(
        SystemConfig::for_tests(),
        Arc::new(clock.clone()),
        client,
        Arc::new(EventLog::new()),
    );
    c.hardware_mut().camera.push(face_frame(1, 0));
    let d = c.press_doorbell().unwrap();
    assert_eq!(d.reason, DecisionReason::RecognitionUnavailable);
    let kinds: Vec<EventKind> = c.log().snapshot().into_iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        vec![
            EventKind::DoorbellPressed,
            EventKind::FrameCaptured,
            EventKind::FaceDetected,
            EventKind::AccessDenied,
        ]
    );
    assert!(c.hardware().relay.pin().history().is_empty());
}

#[test]
fn debounced_press_runs_nothing() {
    let (clock, mut c) = rig();
    c.hardware_mut().camera.push(blank_frame(1));
    assert!(c.press_doorbell().is_some());
    clock.advance(100);
    assert!(c.press_doorbell().is_none());
    clock.advance(200);
    assert!(c.press_doorbell().is_some());
}

#[test]
fn remote_unlock_rules() {
    let (clock, mut c) = rig();
    assert_eq!(
        c.remote_unlock("wrong", None),
        Err(ControllerError::Unauthorized)
    );
    assert!(c.log().is_empty());
    assert_eq!(c.state(), LockState::Locked);
    assert!(matches!(
        c.remote_unlock(TOKEN, Some(0)),
        Err(ControllerError::InvalidRequest(_))
    ));

    clock.set(1000);
    let d = c.remote_unlock(TOKEN, Some(2000)).unwrap();
    assert!(d.granted());
    assert_eq!(d.person_id.as_deref(), Some(ADMIN_PERSON_ID));
    assert_eq!(c.state(), LockState::Unlocked { relock_at: 3000 });
    assert_eq!(
        kinds_since(&c, 0),
        vec![EventKind::RemoteUnlock, EventKind::DoorUnlocked]
    );
    clock.set(3000);
    assert!(c.tick());

    clock.set(4000);
    c.remote_unlock(TOKEN, None).unwrap();
    assert_eq!(c.state(), LockState::Unlocked { relock_at: 9000 });
}

#[test]
fn enroll_creates_a_trained_person() {
    let (_clock, mut c) = rig();
    let pid = enroll(&mut c, "Karan", Role::Resident, None, 1);
    let group = c.faces().group("home").unwrap();
    assert!(group.trained());
    assert_eq!(group.person(&pid).unwrap().name, "Karan");
    let ev = c.log().snapshot().pop().unwrap();
    assert_eq!(ev.kind, EventKind::UserEnrolled);
    assert_eq!(ev.payload.person_id.as_deref(), Some(pid.as_str()));
    let listed = c.list_persons(TOKEN).unwrap();
    assert_eq!(listed.len(), 1);
}

#[test]
fn enroll_from_camera_consumes_one_frame() {
    let (_clock, mut c) = rig();
    c.hardware_mut().camera.push(face_frame(3, 0));
    c.hardware_mut().camera.push(face_frame(4, 0));
    c.enroll(TOKEN, "Ravi", Role::Resident, None).unwrap();
    assert_eq!(c.hardware().camera.pending(), 1);
    assert_eq!(
        c.enroll(TOKEN, "Nobody", Role::Resident, None).map(|_| ()),
        Ok(())
    );
    assert_eq!(
        c.enroll(TOKEN, "Late", Role::Resident, None),
        Err(ControllerError::CaptureFailed)
    );
}

#[test]
fn enroll_uniform_frame_changes_nothing() {
    let (_clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    let before = c.faces().group("home").unwrap();
    let r = c.enroll_with_frame(TOKEN, "Ghost", Role::Resident, None, Some(blank_frame(77)));
    assert_eq!(r, Err(ControllerError::NoFaceFound));
    assert_eq!(c.faces().group("home").unwrap(), before);
    assert_eq!(
        c.log().snapshot().pop().unwrap().kind,
        EventKind::NoFaceFound
    );
}

#[test]
fn enroll_validates_request() {
    let (_clock, mut c) = rig();
    let f = || Some(face_frame(1, 0));
    assert_eq!(
        c.enroll_with_frame("bad", "A", Role::Resident, None, f()),
        Err(ControllerError::Unauthorized)
    );
    assert!(matches!(
        c.enroll_with_frame(TOKEN, "A", Role::Guest, None, f()),
        Err(ControllerError::InvalidRequest(_))
    ));
    assert!(matches!(
        c.enroll_with_frame(TOKEN, "A", Role::Resident, Some(5), f()),
        Err(ControllerError::InvalidRequest(_))
    ));
    assert!(matches!(
        c.enroll_with_frame(TOKEN, " ", Role::Resident, None, f()),
        Err(ControllerError::InvalidRequest(_))
    ));
    assert!(c.log().is_empty());
    assert_eq!(c.list_persons("bad"), Err(ControllerError::Unauthorized));
    assert!(c.list_persons(TOKEN).unwrap().is_empty());
}

#[test]
fn deleted_person_is_denied() {
    let (clock, mut c) = rig();
    let pid = enroll(&mut c, "Karan", Role::Resident, None, 1);
    enroll(&mut c, "Ravi", Role::Resident, None, 3);
    assert_eq!(
        c.delete_person("bad", &pid),
        Err(ControllerError::Unauthorized)
    );
    c.delete_person(TOKEN, &pid).unwrap();
    assert_eq!(
        ring(&mut c, face_frame(1, 1)).reason,
        DecisionReason::BelowThreshold
    );
    clock.advance(1000);
    assert!(ring(&mut c, face_frame(3, 1)).granted());
}

#[test]
fn shutdown_relocks() {
    let (_clock, mut c) = rig();
    c.remote_unlock(TOKEN, None).unwrap();
    c.shutdown();
    assert_eq!(c.state(), LockState::Locked);
    assert!(!c.hardware().relay.energized());
    let ev = c.log().snapshot().pop().unwrap();
    assert_eq!(ev.kind, EventKind::DoorRelocked);
    assert_eq!(ev.payload.detail.as_deref(), Some("shutdown"));
}

#[test]
fn every_doorbell_has_one_detection_and_one_decision() {
    let (clock, mut c) = rig();
    enroll(&mut c, "Karan", Role::Resident, None, 1);
    enroll(&mut c, "Mallory", Role::Blacklisted, None, 4);
    let frames = [
        Some(face_frame(1, 1)),
        Some(blank_frame(3)),
        Some(face_frame(4, 1)),
        None,
        Some(face_frame(8, 1)),
    ];
    for f in frames {
        clock.advance(1000);
        let mark = c.log().last_seq();
        if let Some(f) = f {
            c.hardware_mut().camera.push(f);
        }
        c.press_doorbell().unwrap();
        let kinds = kinds_since(&c, mark);
        assert_eq!(kinds[0], EventKind::DoorbellPressed);
        let count = |set: &[EventKind]| kinds.iter().filter(|k| set.contains(k)).count();
        assert_eq!(count(&[EventKind::FaceDetected, EventKind::NoFaceFound]), 1);
        assert_eq!(
            count(&[EventKind::AccessGranted, EventKind::AccessDenied]),
            1
        );
    }
}
