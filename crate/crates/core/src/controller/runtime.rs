//! Event loop that owns a [`Controller`] on its own thread. Callers submit
//! commands through one ordered queue and get answers back on a oneshot.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;

use super::{AccessDecision, Controller, ControllerError, LockState};
use crate::events::EventLog;
use crate::hwsim::SolenoidPosition;
use crate::model::{GrayImage, Role};
use crate::protocol::{FaceApi, PersonInfo};

pub type Reply<T> = oneshot::Sender<T>;

pub enum Command {
    /// Press the doorbell, optionally queuing `frame` on the camera first.
    Doorbell {
        frame: Option<GrayImage>,
        reply: Reply<Option<AccessDecision>>,
    },
    Unlock {
        credential: String,
        duration_ms: Option<u64>,
        reply: Reply<Result<AccessDecision, ControllerError>>,
    },
    Enroll {
        credential: String,
        name: String,
        role: Role,
        guest_expires_at: Option<u64>,
        frame: Option<GrayImage>,
        reply: Reply<Result<String, ControllerError>>,
    },
    ListPersons {
        credential: String,
        reply: Reply<Result<Vec<PersonInfo>, ControllerError>>,
    },
    DeletePerson {
        credential: String,
        person_id: String,
        reply: Reply<Result<(), ControllerError>>,
    },
    State {
        reply: Reply<StateSnapshot>,
    },
    Shutdown {
        reply: Reply<StateSnapshot>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    #[serde(flatten)]
    pub lock: LockState,
    pub now_ms: u64,
    pub relay_energized: bool,
    pub solenoid: SolenoidPosition,
    pub last_seq: u64,
}

impl<F: FaceApi> Controller<F> {
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            lock: self.state(),
            now_ms: self.now(),
            relay_energized: self.hardware().relay.energized(),
            solenoid: self.hardware().read_solenoid(),
            last_seq: self.log().last_seq(),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("controller is not running")]
pub struct Stopped;

/// Cloneable handle for submitting commands.
#[derive(Clone)]
pub struct ControllerHandle {
    tx: mpsc::Sender<Command>,
    log: Arc<EventLog>,
}

impl ControllerHandle {
    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn submit(&self, cmd: Command) -> Result<(), Stopped> {
        self.tx.send(cmd).map_err(|_| Stopped)
    }

    pub async fn request<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, Stopped> {
        let (tx, rx) = oneshot::channel();
        self.submit(make(tx))?;
        rx.await.map_err(|_| Stopped)
    }

    /// Blocking variant for non-async callers. Must not run on a runtime
    /// thread.
    pub fn request_blocking<T>(
        &self,
        make: impl FnOnce(Reply<T>) -> Command,
    ) -> Result<T, Stopped> {
        let (tx, rx) = oneshot::channel();
        self.submit(make(tx))?;
        rx.blocking_recv().map_err(|_| Stopped)
    }
}

/// The running loop; join it after sending `Shutdown`.
pub struct ControllerThread {
    pub handle: ControllerHandle,
    thread: Option<JoinHandle<()>>,
}

impl ControllerThread {
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Relocks the door and stops the loop.
    pub fn shutdown(self) -> Option<StateSnapshot> {
        let snap = self
            .handle
            .request_blocking(|reply| Command::Shutdown { reply })
            .ok();
        self.join();
        snap
    }
}

/// Moves `controller` onto a new thread. Between commands the loop ticks at
/// least every `tick_every`.
pub fn spawn<F: FaceApi + 'static>(
    mut controller: Controller<F>,
    tick_every: Duration,
) -> ControllerThread {
    let (tx, rx) = mpsc::channel::<Command>();
    let log = controller.log().clone();
    let thread = std::thread::Builder::new()
        .name("door-controller".into())
        .spawn(move || loop {
            match rx.recv_timeout(tick_every) {
                Ok(Command::Shutdown { reply }) => {
                    controller.shutdown();
                    let _ = reply.send(controller.snapshot());
                    return;
                }
                Ok(cmd) => {
                    controller.tick();
                    dispatch(&mut controller, cmd);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    controller.shutdown();
                    return;
                }
            }
            controller.tick();
        })
        .expect("spawn controller thread");
    ControllerThread {
        handle: ControllerHandle { tx, log },
        thread: Some(thread),
    }
}

fn dispatch<F: FaceApi>(c: &mut Controller<F>, cmd: Command) {
    match cmd {
        Command::Doorbell { frame, reply } => {
            if let Some(f) = frame {
                c.hardware_mut().camera.push(f);
            }
            let _ = reply.send(c.press_doorbell());
        }
        Command::Unlock {
            credential,
            duration_ms,
            reply,
        } => {
            let _ = reply.send(c.remote_unlock(&credential, duration_ms));
        }
        Command::Enroll {
            credential,
            name,
            role,
            guest_expires_at,
            frame,
            reply,
        } => {
            let _ =
                reply.send(c.enroll_with_frame(&credential, &name, role, guest_expires_at, frame));
        }
        Command::ListPersons { credential, reply } => {
            let _ = reply.send(c.list_persons(&credential));
        }
        Command::DeletePerson {
            credential,
            person_id,
            reply,
        } => {
            let _ = reply.send(c.delete_person(&credential, &person_id));
        }
        Command::State { reply } => {
            let _ = reply.send(c.snapshot());
        }
        Command::Shutdown { .. } => unreachable!("handled by the loop"),
    }
}
