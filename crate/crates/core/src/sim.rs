//! Deterministic replay: the controller on a manual clock, driven by a
//! scenario script.
//!
//! Script lines are `at <ms> press`, `at <ms> frame <path>` and
//! `at <ms> advance <ms>`. Blank lines and `#` comments are ignored. Times
//! never go backwards. Frame paths are resolved against the configured
//! frames directory, or the script's own directory when none is set.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::clock::ManualClock;
use crate::config::SystemConfig;
use crate::controller::{AccessDecision, Controller};
use crate::events::EventLog;
use crate::hwsim::load_frame;
use crate::model::GrayImage;
use crate::protocol::service::{FaceService, ServiceSettings};
use crate::store::{PersonGroup, Store, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Press,
    Frame(PathBuf),
    Advance(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub at_ms: u64,
    pub action: Action,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            Action::Press => write!(f, "at {} press", self.at_ms),
            Action::Frame(p) => write!(f, "at {} frame {}", self.at_ms, p.display()),
            Action::Advance(ms) => write!(f, "at {} advance {}", self.at_ms, ms),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Vec<Step>, ScenarioError> {
    let mut steps = Vec::new();
    let mut last = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| ScenarioError::Parse {
            line: i + 1,
            reason,
        };
        let mut parts = line
            .splitn(4, char::is_whitespace)
            .filter(|s| !s.is_empty());
        if parts.next() != Some("at") {
            return Err(err("expected `at <ms> <command>`".into()));
        }
        let at_ms: u64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("bad time".into()))?;
        if at_ms < last {
            return Err(err(format!("time {at_ms} is before {last}")));
        }
        last = at_ms;
        let rest: Vec<&str> = line.split_whitespace().skip(3).collect();
        let action = match (parts.next(), rest.as_slice()) {
            (Some("press"), []) => Action::Press,
            (Some("frame"), [_, ..]) => {
                // the path is everything after the keyword
                let kw = line.find("frame").expect("keyword present") + "frame".len();
                Action::Frame(PathBuf::from(line[kw..].trim()))
            }
            (Some("advance"), [ms]) => Action::Advance(
                ms.parse()
                    .map_err(|_| err(format!("bad duration {ms:?}")))?,
            ),
            (Some(cmd), _) => return Err(err(format!("bad command {cmd:?}"))),
            (None, _) => return Err(err("missing command".into())),
        };
        steps.push(Step { at_ms, action });
    }
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq)]
enum Loaded {
    Press,
    Frame(GrayImage),
    Advance(u64),
}

/// A parsed script with every frame already decoded, so a bad file fails
/// before anything runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    steps: Vec<(u64, Loaded)>,
}

impl Scenario {
    pub fn load(path: &Path, frames_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = match frames_dir {
            Some(d) => d.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        Self::from_steps(&parse_scenario(&text)?, &base)
    }

    pub fn from_steps(steps: &[Step], base: &Path) -> Result<Self, ScenarioError> {
        let steps = steps
            .iter()
            .map(|s| {
                let loaded = match &s.action {
                    Action::Press => Loaded::Press,
                    Action::Advance(ms) => Loaded::Advance(*ms),
                    Action::Frame(p) => {
                        let full = base.join(p);
                        Loaded::Frame(load_frame(&full).map_err(|e| ScenarioError::Io {
                            path: full,
                            reason: e.to_string(),
                        })?)
                    }
                };
                Ok((s.at_ms, loaded))
            })
            .collect::<Result<_, ScenarioError>>()?;
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Controller, recognition service and hardware on one manual clock that
/// starts at 0.
pub struct Simulation {
    clock: ManualClock,
    controller: Controller<Arc<FaceService>>,
}

impl Simulation {
    pub fn new(config: SystemConfig, groups: Vec<PersonGroup>) -> Self {
        let clock = ManualClock::new(0);
        let mut store = Store::new();
        for g in groups {
            store.insert(g);
        }
        let settings = ServiceSettings {
            store_dir: None,
            ..ServiceSettings::from(&config)
        };
        let faces = Arc::new(FaceService::new(store, Arc::new(clock.clone()), settings));
        let controller = Controller::new(
            config,
            Arc::new(clock.clone()),
            faces,
            Arc::new(EventLog::new()),
        );
        Self { clock, controller }
    }

    /// Reads the configured group from `store_dir`, if present. The store is
    /// never written.
    pub fn from_config(config: SystemConfig) -> Result<Self, ScenarioError> {
        let mut groups = Vec::new();
        if let Some(dir) = &config.store_dir {
            let path = Store::group_path(dir, &config.person_group_id);
            if path.exists() {
                groups.push(PersonGroup::load(&path)?);
            }
        }
        Ok(Self::new(config, groups))
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }

    pub fn now(&self) -> u64 {
        self.controller.now()
    }

    pub fn controller(&self) -> &Controller<Arc<FaceService>> {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut Controller<Arc<FaceService>> {
        &mut self.controller
    }

    pub fn log(&self) -> &Arc<EventLog> {
        self.controller.log()
    }

    /// Moves the clock to `t`, stopping at every relock deadline on the way
    /// so relocks happen at their exact time.
    pub fn advance_to(&mut self, t: u64) {
        while let Some(deadline) = self.controller.next_deadline() {
            if deadline > t {
                break;
            }
            self.clock.set(deadline);
            self.controller.tick();
        }
        self.clock.set(t);
        self.controller.tick();
    }

    pub fn advance(&mut self, ms: u64) {
        let t = self.now().saturating_add(ms);
        self.advance_to(t);
    }

    pub fn press(&mut self) -> Option<AccessDecision> {
        self.controller.tick();
        self.controller.press_doorbell()
    }

    pub fn queue_frame(&mut self, frame: GrayImage) {
        self.controller.hardware_mut().camera.push(frame);
    }

    /// Runs every step, then lets any open door relock.
    pub fn run(&mut self, scenario: &Scenario) -> Vec<AccessDecision> {
        let mut decisions = Vec::new();
        for (at, step) in &scenario.steps {
            if *at > self.now() {
                self.advance_to(*at);
            }
            match step {
                Loaded::Press => decisions.extend(self.press()),
                Loaded::Frame(img) => self.queue_frame(img.clone()),
                Loaded::Advance(ms) => self.advance(*ms),
            }
        }
        self.settle();
        decisions
    }

    /// Advances to the pending relock deadline, if any.
    pub fn settle(&mut self) {
        if let Some(deadline) = self.controller.next_deadline() {
            self.advance_to(deadline);
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.log().to_jsonl()
    }
}
