//! In-process recognition service: the store, detected-face handles with a
//! TTL, and optional write-through persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::{
    CreatePersonRequest, DetectedFace, ErrorCode, FaceApi, FaceApiError, IdentifyRequest,
    IdentifyResult, PersonInfo, WireError,
};
use crate::clock::SharedClock;
use crate::model::{FaceBox, FaceDescriptor};
use crate::store::{valid_group_id, PersonGroup, Store, StoreError, TrainingStatus};
use crate::vision::{self, decode_pgm, VisionError};

/// Upper bound on face ids per identify request.
pub const MAX_FACE_IDS: usize = 10;

#[derive(Debug, Clone)]
pub struct DetectedFaceHandle {
    pub face_id: String,
    pub descriptor: FaceDescriptor,
    pub region: FaceBox,
    pub expires_at: u64,
}

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub face_id_ttl_ms: u64,
    pub min_area_fraction: f64,
    /// Every mutated group is written to `<dir>/<group_id>.json`.
    pub store_dir: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            face_id_ttl_ms: crate::config::DEFAULT_FACE_ID_TTL_S * 1000,
            min_area_fraction: crate::config::DEFAULT_AREA_FRACTION_MIN,
            store_dir: None,
        }
    }
}

impl From<&crate::config::SystemConfig> for ServiceSettings {
    fn from(cfg: &crate::config::SystemConfig) -> Self {
        Self {
            face_id_ttl_ms: cfg.face_id_ttl_ms(),
            min_area_fraction: cfg.detection_area_fraction_min,
            store_dir: cfg.store_dir.clone(),
        }
    }
}

struct Handles {
    next: u64,
    live: HashMap<String, DetectedFaceHandle>,
}

/// Groups are guarded by one lock so mutations are serialized while
/// identify runs under a shared read lock.
pub struct FaceService {
    store: RwLock<Store>,
    handles: Mutex<Handles>,
    clock: SharedClock,
    settings: ServiceSettings,
}

impl FaceService {
    pub fn new(store: Store, clock: SharedClock, settings: ServiceSettings) -> Self {
        Self {
            store: RwLock::new(store),
            handles: Mutex::new(Handles {
                next: 1,
                live: HashMap::new(),
            }),
            clock,
            settings,
        }
    }

    /// Service over the groups persisted in `settings.store_dir` (empty when
    /// the directory does not exist yet).
    pub fn open(clock: SharedClock, settings: ServiceSettings) -> Result<Self, StoreError> {
        let store = match &settings.store_dir {
            Some(dir) if dir.exists() => Store::load_dir(dir)?,
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| StoreError::Io {
                    path: dir.clone(),
                    reason: e.to_string(),
                })?;
                Store::new()
            }
            None => Store::new(),
        };
        Ok(Self::new(store, clock, settings))
    }

    pub fn settings(&self) -> &ServiceSettings {
        &self.settings
    }

    /// Copy of a group, for inspection.
    pub fn group(&self, group_id: &str) -> Option<PersonGroup> {
        self.store.read().unwrap().group(group_id).ok().cloned()
    }

    pub fn live_handles(&self) -> usize {
        self.handles.lock().unwrap().live.len()
    }

    fn persist(&self, group: &PersonGroup) -> Result<(), WireError> {
        if let Some(dir) = &self.settings.store_dir {
            group
                .persist(&Store::group_path(dir, group.group_id()))
                .map_err(WireError::from)?;
        }
        Ok(())
    }

    fn mutate<T>(
        &self,
        group_id: &str,
        f: impl FnOnce(&mut PersonGroup) -> Result<T, StoreError>,
    ) -> Result<T, FaceApiError> {
        let mut store = self.store.write().unwrap();
        let group = store.group_mut(group_id).map_err(WireError::from)?;
        let out = f(group).map_err(WireError::from)?;
        self.persist(group)?;
        Ok(out)
    }

    fn read<T>(
        &self,
        group_id: &str,
        f: impl FnOnce(&PersonGroup) -> Result<T, WireError>,
    ) -> Result<T, FaceApiError> {
        let store = self.store.read().unwrap();
        let group = store.group(group_id).map_err(WireError::from)?;
        Ok(f(group)?)
    }

    fn take_descriptor(&self, face_id: &str, now: u64) -> Result<FaceDescriptor, WireError> {
        let mut handles = self.handles.lock().unwrap();
        let handle = handles
            .live
            .get(face_id)
            .ok_or_else(|| WireError::bad_request(format!("unknown face_id {face_id}")))?;
        if now >= handle.expires_at {
            handles.live.remove(face_id);
            return Err(WireError::new(
                ErrorCode::FaceIdExpired,
                format!("face_id {face_id} expired"),
            ));
        }
        Ok(handle.descriptor.clone())
    }
}

fn decode(pgm: &[u8]) -> Result<crate::model::GrayImage, WireError> {
    decode_pgm(pgm).map_err(|e| WireError::from(VisionError::from(e)))
}

impl FaceApi for FaceService {
    fn create_group(&self, group_id: &str) -> Result<(), FaceApiError> {
        if !valid_group_id(group_id) {
            return Err(WireError::bad_request(format!(
                "group id {group_id:?} must match [a-z0-9_-]{{1,64}}"
            ))
            .into());
        }
        let mut store = self.store.write().unwrap();
        let fresh = store.group(group_id).is_err();
        let group = store.create_group(group_id);
        if fresh {
            self.persist(group)?;
        }
        Ok(())
    }

    fn add_person(
        &self,
        group_id: &str,
        req: &CreatePersonRequest,
    ) -> Result<String, FaceApiError> {
        if req.name.trim().is_empty() {
            return Err(WireError::bad_request("name must not be empty").into());
        }
        let now = self.clock.now_ms();
        self.mutate(group_id, |g| {
            g.add_person(&req.name, req.role, req.guest_expires_at, now)
        })
    }

    fn add_face(
        &self,
        group_id: &str,
        person_id: &str,
        pgm: &[u8],
    ) -> Result<String, FaceApiError> {
        // check the target first so a bad id is reported before a bad image
        self.read(group_id, |g| {
            g.person(person_id)
                .map(|_| ())
                .ok_or_else(|| StoreError::UnknownPerson(person_id.to_string()).into())
        })?;
        let image = decode(pgm)?;
        let (_, descriptor) =
            vision::analyze(&image, self.settings.min_area_fraction).map_err(WireError::from)?;
        self.mutate(group_id, |g| g.add_descriptor(person_id, descriptor))
    }

    fn get_person(&self, group_id: &str, person_id: &str) -> Result<PersonInfo, FaceApiError> {
        self.read(group_id, |g| {
            g.person(person_id)
                .map(PersonInfo::from)
                .ok_or_else(|| StoreError::UnknownPerson(person_id.to_string()).into())
        })
    }

    fn list_persons(&self, group_id: &str) -> Result<Vec<PersonInfo>, FaceApiError> {
        self.read(group_id, |g| {
            Ok(g.persons().iter().map(PersonInfo::from).collect())
        })
    }

    fn delete_person(&self, group_id: &str, person_id: &str) -> Result<(), FaceApiError> {
        self.mutate(group_id, |g| g.delete_person(person_id).map(|_| ()))
    }

    fn train(&self, group_id: &str) -> Result<(), FaceApiError> {
        self.mutate(group_id, |g| g.train().map(|_| ()))
    }

    fn training_status(&self, group_id: &str) -> Result<TrainingStatus, FaceApiError> {
        self.read(group_id, |g| {
            g.training_status().ok_or_else(|| {
                WireError::new(
                    ErrorCode::NotFound,
                    format!("group {group_id} has never been trained"),
                )
            })
        })
    }

    fn detect(&self, pgm: &[u8]) -> Result<Vec<DetectedFace>, FaceApiError> {
        let image = decode(pgm)?;
        let (region, descriptor) = match vision::analyze(&image, self.settings.min_area_fraction) {
            Ok(found) => found,
            Err(VisionError::NoFaceFound) => return Ok(Vec::new()),
            Err(e) => return Err(WireError::from(e).into()),
        };
        let now = self.clock.now_ms();
        let mut handles = self.handles.lock().unwrap();
        handles.live.retain(|_, h| now < h.expires_at);
        let face_id = format!("f{:08}", handles.next);
        handles.next += 1;
        handles.live.insert(
            face_id.clone(),
            DetectedFaceHandle {
                face_id: face_id.clone(),
                descriptor,
                region,
                expires_at: now.saturating_add(self.settings.face_id_ttl_ms),
            },
        );
        Ok(vec![DetectedFace {
            face_id,
            face_rectangle: region,
        }])
    }

    fn identify(&self, req: &IdentifyRequest) -> Result<Vec<IdentifyResult>, FaceApiError> {
        if req.face_ids.is_empty() || req.face_ids.len() > MAX_FACE_IDS {
            return Err(WireError::bad_request(format!(
                "face_ids must hold 1..={MAX_FACE_IDS} ids"
            ))
            .into());
        }
        if req.max_candidates < 1 {
            return Err(WireError::bad_request("max_candidates must be >= 1").into());
        }
        if !(0.0..=1.0).contains(&req.confidence_threshold) {
            return Err(WireError::bad_request("confidence_threshold must lie in [0, 1]").into());
        }
        let now = self.clock.now_ms();
        let queries = req
            .face_ids
            .iter()
            .map(|id| self.take_descriptor(id, now).map(|d| (id, d)))
            .collect::<Result<Vec<_>, _>>()?;
        self.read(&req.person_group_id, |g| {
            queries
                .into_iter()
                .map(|(id, d)| {
                    let candidates =
                        g.identify(&d, req.confidence_threshold, req.max_candidates as usize)?;
                    Ok(IdentifyResult {
                        face_id: id.clone(),
                        candidates,
                    })
                })
                .collect()
        })
    }
}

impl std::fmt::Debug for FaceService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaceService")
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

/// Loads the store directory once, for offline tools.
pub fn load_group(dir: &Path, group_id: &str) -> Result<PersonGroup, StoreError> {
    PersonGroup::load(&Store::group_path(dir, group_id))
}
