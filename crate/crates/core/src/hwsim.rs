//! Software stand-ins for the door circuit: relay and solenoid, doorbell
//! push button, camera. All timing comes from the shared clock.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SharedClock;
use crate::model::GrayImage;
use crate::vision::{decode_pgm, VisionError};

pub const RELAY_PIN: u8 = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HwError {
    #[error("CaptureFailed: camera queue is empty")]
    CaptureFailed,
    #[error("cannot load frame {path}: {reason}")]
    FrameLoad { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    High,
    Low,
}

/// Output pin that remembers every level change.
#[derive(Debug, Clone)]
pub struct VirtualPin {
    pin_no: u8,
    level: Level,
    history: Vec<(u64, Level)>,
}

impl VirtualPin {
    pub fn new(pin_no: u8) -> Self {
        Self {
            pin_no,
            level: Level::Low,
            history: Vec::new(),
        }
    }

    pub fn pin_no(&self) -> u8 {
        self.pin_no
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Drives the pin; returns whether the level changed.
    pub fn drive(&mut self, level: Level, now: u64) -> bool {
        if level == self.level {
            return false;
        }
        debug_assert!(self.history.last().is_none_or(|(t, _)| *t <= now));
        self.level = level;
        self.history.push((now, level));
        true
    }

    /// Level changes in time order.
    pub fn history(&self) -> &[(u64, Level)] {
        &self.history
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolenoidPosition {
    /// Bolt out, door locked.
    Extended,
    /// Bolt in, door free.
    Retracted,
}

/// Relay coil plus the solenoid it drives. The solenoid follows the relay
/// after exactly `latency_ms`.
#[derive(Debug, Clone)]
pub struct RelaySolenoid {
    pin: VirtualPin,
    latency_ms: u64,
}

impl RelaySolenoid {
    pub fn new(pin_no: u8, latency_ms: u64) -> Self {
        Self {
            pin: VirtualPin::new(pin_no),
            latency_ms,
        }
    }

    pub fn latency_ms(&self) -> u64 {
        self.latency_ms
    }

    pub fn set_relay(&mut self, energized: bool, now: u64) -> bool {
        self.pin
            .drive(if energized { Level::High } else { Level::Low }, now)
    }

    pub fn energized(&self) -> bool {
        self.pin.level() == Level::High
    }

    pub fn pin(&self) -> &VirtualPin {
        &self.pin
    }

    pub fn read_solenoid(&self, now: u64) -> SolenoidPosition {
        self.solenoid_history(now)
            .last()
            .map(|(_, p)| *p)
            .unwrap_or(SolenoidPosition::Extended)
    }

    /// Solenoid movements that have happened by `now`.
    pub fn solenoid_history(&self, now: u64) -> Vec<(u64, SolenoidPosition)> {
        self.pin
            .history()
            .iter()
            .map(|&(t, level)| {
                let pos = match level {
                    Level::High => SolenoidPosition::Retracted,
                    Level::Low => SolenoidPosition::Extended,
                };
                (t + self.latency_ms, pos)
            })
            .take_while(|(t, _)| *t <= now)
            .collect()
    }
}

/// Push button with debounce: a press within `debounce_ms` of the last
/// accepted press is dropped.
#[derive(Debug, Clone)]
pub struct Doorbell {
    debounce_ms: u64,
    last_accepted: Option<u64>,
    presses: Vec<(u64, bool)>,
}

impl Doorbell {
    pub fn new(debounce_ms: u64) -> Self {
        Self {
            debounce_ms,
            last_accepted: None,
            presses: Vec::new(),
        }
    }

    pub fn press(&mut self, now: u64) -> bool {
        let accepted = self
            .last_accepted
            .is_none_or(|last| now.saturating_sub(last) >= self.debounce_ms);
        if accepted {
            self.last_accepted = Some(now);
        }
        self.presses.push((now, accepted));
        accepted
    }

    /// Every press with whether it was accepted.
    pub fn presses(&self) -> &[(u64, bool)] {
        &self.presses
    }
}

/// Frame queue consumed in order by `capture`.
#[derive(Debug, Clone, Default)]
pub struct CameraSource {
    frames: VecDeque<GrayImage>,
    captured: u64,
}

impl CameraSource {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `.pgm` file in `dir`, in lexicographic file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self, HwError> {
        let load_err = |path: &Path, reason: String| HwError::FrameLoad {
            path: path.to_path_buf(),
            reason,
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| load_err(dir, e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        let mut cam = Self::new();
        for path in paths {
            cam.push(load_frame(&path)?);
        }
        Ok(cam)
    }

    pub fn push(&mut self, frame: GrayImage) {
        self.frames.push_back(frame);
    }

    pub fn pending(&self) -> usize {
        self.frames.len()
    }

    /// Number of frames captured so far.
    pub fn captured(&self) -> u64 {
        self.captured
    }

    pub fn capture(&mut self) -> Result<GrayImage, HwError> {
        let frame = self.frames.pop_front().ok_or(HwError::CaptureFailed)?;
        self.captured += 1;
        Ok(frame)
    }
}

pub fn load_frame(path: &Path) -> Result<GrayImage, HwError> {
    let bytes = fs::read(path).map_err(|e| HwError::FrameLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_pgm(&bytes).map_err(|e| HwError::FrameLoad {
        path: path.to_path_buf(),
        reason: VisionError::from(e).to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Doorbell,
}

/// The whole simulated circuit.
pub struct Hardware {
    clock: SharedClock,
    pub relay: RelaySolenoid,
    pub doorbell: Doorbell,
    pub camera: CameraSource,
    inputs: VecDeque<Input>,
}

impl Hardware {
    pub fn new(clock: SharedClock, solenoid_latency_ms: u64, debounce_ms: u64) -> Self {
        Self {
            clock,
            relay: RelaySolenoid::new(RELAY_PIN, solenoid_latency_ms),
            doorbell: Doorbell::new(debounce_ms),
            camera: CameraSource::new(),
            inputs: VecDeque::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    /// Returns whether the press survived debouncing and was queued.
    pub fn press_doorbell(&mut self) -> bool {
        let accepted = self.doorbell.press(self.clock.now_ms());
        if accepted {
            self.inputs.push_back(Input::Doorbell);
        }
        accepted
    }

    pub fn next_input(&mut self) -> Option<Input> {
        self.inputs.pop_front()
    }

    pub fn set_relay(&mut self, energized: bool) -> bool {
        let now = self.clock.now_ms();
        self.relay.set_relay(energized, now)
    }

    pub fn read_solenoid(&self) -> SolenoidPosition {
        self.relay.read_solenoid(self.clock.now_ms())
    }

    pub fn capture(&mut self) -> Result<GrayImage, HwError> {
        self.camera.capture()
    }
}
