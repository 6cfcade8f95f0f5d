//! Face-recognition door: local vision, recognition store, the face
//! protocol between door and recognition service, a hardware simulator and
//! the door controller.

pub mod clock;
pub mod config;
pub mod controller;
pub mod events;
pub mod http;
pub mod hwsim;
pub mod model;
pub mod protocol;
pub mod sim;
pub mod store;
pub mod synth;
pub mod vision;

pub use clock::{Clock, ManualClock, SharedClock, SystemClock};
pub use config::{validate_config, ConfigError, RawConfig, SystemConfig};
pub use controller::{AccessDecision, Controller, ControllerError, LockState, Outcome};
pub use events::{EventCursor, EventLog};
pub use model::{
    greeting_for, DecisionReason, DoorEvent, EventKind, EventPayload, FaceBox, FaceDescriptor,
    GrayImage, PersonRecord, Role, DESCRIPTOR_LEN,
};
pub use sim::{Scenario, ScenarioError, Simulation};
pub use store::{IdentifyCandidate, PersonGroup, Store, StoreError};
