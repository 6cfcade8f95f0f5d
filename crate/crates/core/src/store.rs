//! Person groups: enrolled identities, their face descriptors, the training
//! lifecycle and the identify query. Groups persist as JSON documents.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::model::{FaceBox, FaceDescriptor, GrayImage, PersonRecord, Role, DESCRIPTOR_LEN};
use crate::vision::{self, VisionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("UnknownGroup: {0}")]
    UnknownGroup(String),
    #[error("UnknownPerson: {0}")]
    UnknownPerson(String),
    #[error("RoleExpiryMismatch: role {0} requires guest_expires_at iff guest")]
    RoleExpiryMismatch(Role),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error("PersonWithoutFace: {0}")]
    PersonWithoutFace(String),
    #[error("NotTrained: group {0} changed since last training")]
    NotTrained(String),
    #[error("DegenerateDescriptor")]
    DegenerateDescriptor,
    #[error("StoreCorrupt: {0}")]
    StoreCorrupt(String),
    #[error("store io error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Group ids are `[a-z0-9_-]{1,64}`.
pub fn valid_group_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyCandidate {
    pub person_id: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingStatus {
    Succeeded,
    /// Trained once, mutated since.
    Outdated,
}

#[derive(Debug, Clone)]
pub struct PersonGroup {
    group_id: String,
    persons: Vec<PersonRecord>,
    version: u64,
    trained_version: Option<u64>,
    ever_trained: bool,
    next_person: u64,
}

/// Equality over the persisted state: id, persons, version and whether the
/// current version is trained.
impl PartialEq for PersonGroup {
    fn eq(&self, other: &Self) -> bool {
        self.group_id == other.group_id
            && self.version == other.version
            && self.trained() == other.trained()
            && self.persons == other.persons
    }
}

impl PersonGroup {
    pub fn new(group_id: impl Into<String>) -> Self {
        Self {
            group_id: group_id.into(),
            persons: Vec::new(),
            version: 0,
            trained_version: None,
            ever_trained: false,
            next_person: 1,
        }
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn trained(&self) -> bool {
        self.trained_version == Some(self.version)
    }

    /// Enrollment order.
    pub fn persons(&self) -> &[PersonRecord] {
        &self.persons
    }

    pub fn person(&self, person_id: &str) -> Option<&PersonRecord> {
        self.persons.iter().find(|p| p.person_id == person_id)
    }

    pub fn training_status(&self) -> Option<TrainingStatus> {
        if self.trained() {
            Some(TrainingStatus::Succeeded)
        } else if self.ever_trained {
            Some(TrainingStatus::Outdated)
        } else {
            None
        }
    }

    fn touch(&mut self) {
        self.version += 1;
    }

    fn fresh_person_id(&mut self) -> String {
        loop {
            let id = format!("p{:06}", self.next_person);
            self.next_person += 1;
            if self.person(&id).is_none() {
                return id;
            }
        }
    }

    pub fn add_person(
        &mut self,
        name: &str,
        role: Role,
        guest_expires_at: Option<u64>,
        now_ms: u64,
    ) -> Result<String, StoreError> {
        if !PersonRecord::role_matches_expiry(role, guest_expires_at) {
            return Err(StoreError::RoleExpiryMismatch(role));
        }
        let person_id = self.fresh_person_id();
        self.persons.push(PersonRecord {
            person_id: person_id.clone(),
            name: name.to_string(),
            role,
            descriptors: Vec::new(),
            enrolled_at: now_ms,
            guest_expires_at,
        });
        self.touch();
        Ok(person_id)
    }

    /// Appends an already computed descriptor; returns its persisted face id.
    pub fn add_descriptor(
        &mut self,
        person_id: &str,
        descriptor: FaceDescriptor,
    ) -> Result<String, StoreError> {
        let person = self
            .persons
            .iter_mut()
            .find(|p| p.person_id == person_id)
            .ok_or_else(|| StoreError::UnknownPerson(person_id.to_string()))?;
        person.descriptors.push(descriptor);
        let face_id = format!("{person_id}-f{}", person.descriptors.len());
        self.touch();
        Ok(face_id)
    }

    /// Runs detection, cropping and descriptor extraction on `image` and
    /// stores the result for `person_id`.
    pub fn add_face(
        &mut self,
        person_id: &str,
        image: &GrayImage,
        min_area_fraction: f64,
    ) -> Result<(String, FaceBox), StoreError> {
        if self.person(person_id).is_none() {
            return Err(StoreError::UnknownPerson(person_id.to_string()));
        }
        let (region, descriptor) = vision::analyze(image, min_area_fraction)?;
        Ok((self.add_descriptor(person_id, descriptor)?, region))
    }

    pub fn delete_person(&mut self, person_id: &str) -> Result<PersonRecord, StoreError> {
        let idx = self
            .persons
            .iter()
            .position(|p| p.person_id == person_id)
            .ok_or_else(|| StoreError::UnknownPerson(person_id.to_string()))?;
        let removed = self.persons.remove(idx);
        self.touch();
        Ok(removed)
    }

    pub fn train(&mut self) -> Result<TrainingStatus, StoreError> {
        if let Some(p) = self.persons.iter().find(|p| p.descriptors.is_empty()) {
            return Err(StoreError::PersonWithoutFace(p.person_id.clone()));
        }
        self.trained_version = Some(self.version);
        self.ever_trained = true;
        Ok(TrainingStatus::Succeeded)
    }

    /// Ranks persons by their best cosine similarity to `query`.
    ///
    /// Confidence is the similarity clamped to [0, 1]. Candidates below
    /// `threshold` are dropped; the rest are sorted by confidence descending
    /// with enrollment order breaking ties, then truncated.
    pub fn identify(
        &self,
        query: &FaceDescriptor,
        threshold: f64,
        max_candidates: usize,
    ) -> Result<Vec<IdentifyCandidate>, StoreError> {
        if !self.trained() {
            return Err(StoreError::NotTrained(self.group_id.clone()));
        }
        if query.is_degenerate() {
            return Err(StoreError::DegenerateDescriptor);
        }
        let mut candidates: Vec<IdentifyCandidate> = self
            .persons
            .iter()
            .filter_map(|p| {
                let score = p
                    .descriptors
                    .iter()
                    .map(|d| d.cosine(query))
                    .fold(f64::NEG_INFINITY, f64::max);
                let confidence = score.clamp(0.0, 1.0);
                (confidence >= threshold).then(|| IdentifyCandidate {
                    person_id: p.person_id.clone(),
                    confidence,
                })
            })
            .collect();
        // stable sort keeps enrollment order among equal confidences
        candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        candidates.truncate(max_candidates);
        Ok(candidates)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GroupDocOut::from(self)).expect("group serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let doc: GroupDocIn =
            serde_json::from_str(text).map_err(|e| StoreError::StoreCorrupt(e.to_string()))?;
        doc.into_group()
    }

    /// Writes the group to `path` (via a temporary sibling and rename).
    pub fn persist(&self, path: &Path) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }
}

/// Descriptor components are written with 17 significant digits, enough to
/// reproduce every f64 exactly.
struct Exact17<'a>(&'a [f64; DESCRIPTOR_LEN]);

impl Serialize for Exact17<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(DESCRIPTOR_LEN))?;
        for v in self.0.iter() {
            let raw =
                RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct PersonDocOut<'a> {
    person_id: &'a str,
    name: &'a str,
    role: Role,
    enrolled_at: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    guest_expires_at: Option<u64>,
    descriptors: Vec<Exact17<'a>>,
}

#[derive(Serialize)]
struct GroupDocOut<'a> {
    group_id: &'a str,
    version: u64,
    trained: bool,
    persons: Vec<PersonDocOut<'a>>,
}

impl<'a> From<&'a PersonGroup> for GroupDocOut<'a> {
    fn from(g: &'a PersonGroup) -> Self {
        GroupDocOut {
            group_id: &g.group_id,
            version: g.version,
            trained: g.trained(),
            persons: g
                .persons
                .iter()
                .map(|p| PersonDocOut {
                    person_id: &p.person_id,
                    name: &p.name,
                    role: p.role,
                    enrolled_at: p.enrolled_at,
                    guest_expires_at: p.guest_expires_at,
                    descriptors: p.descriptors.iter().map(|d| Exact17(d.values())).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonDocIn {
    person_id: String,
    name: String,
    role: Role,
    enrolled_at: u64,
    #[serde(default)]
    guest_expires_at: Option<u64>,
    descriptors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDocIn {
    group_id: String,
    version: u64,
    trained: bool,
    persons: Vec<PersonDocIn>,
}

impl GroupDocIn {
    fn into_group(self) -> Result<PersonGroup, StoreError> {
        let corrupt = |m: String| StoreError::StoreCorrupt(m);
        if !valid_group_id(&self.group_id) {
            return Err(corrupt(format!("bad group id {:?}", self.group_id)));
        }
        let mut persons: Vec<PersonRecord> = Vec::with_capacity(self.persons.len());
        let mut max_serial = 0u64;
        for p in self.persons {
            if persons.iter().any(|q| q.person_id == p.person_id) {
                return Err(corrupt(format!("duplicate person id {}", p.person_id)));
            }
            if !PersonRecord::role_matches_expiry(p.role, p.guest_expires_at) {
                return Err(corrupt(format!(
                    "person {} has role {} with inconsistent expiry",
                    p.person_id, p.role
                )));
            }
            let descriptors = p
                .descriptors
                .iter()
                .map(|d| {
                    FaceDescriptor::from_slice(d).ok_or_else(|| {
                        corrupt(format!(
                            "descriptor of {} has {} components",
                            p.person_id,
                            d.len()
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(n) = p
                .person_id
                .strip_prefix('p')
                .and_then(|s| s.parse::<u64>().ok())
            {
                max_serial = max_serial.max(n);
            }
            persons.push(PersonRecord {
                person_id: p.person_id,
                name: p.name,
                role: p.role,
                descriptors,
                enrolled_at: p.enrolled_at,
                guest_expires_at: p.guest_expires_at,
            });
        }
        if self.trained {
            if let Some(p) = persons.iter().find(|p| p.descriptors.is_empty()) {
                return Err(corrupt(format!(
                    "trained group has faceless person {}",
                    p.person_id
                )));
            }
        }
        Ok(PersonGroup {
            group_id: self.group_id,
            persons,
            version: self.version,
            trained_version: self.trained.then_some(self.version),
            ever_trained: self.trained,
            next_person: max_serial + 1,
        })
    }
}

/// All groups known to one recognition service.
#[derive(Debug, Clone, Default)]
pub struct Store {
    groups: BTreeMap<String, PersonGroup>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent: an existing group is returned unchanged.
    pub fn create_group(&mut self, group_id: &str) -> &mut PersonGroup {
        self.groups
            .entry(group_id.to_string())
            .or_insert_with(|| PersonGroup::new(group_id))
    }

    pub fn insert(&mut self, group: PersonGroup) {
        self.groups.insert(group.group_id.clone(), group);
    }

    pub fn group(&self, group_id: &str) -> Result<&PersonGroup, StoreError> {
        self.groups
            .get(group_id)
            .ok_or_else(|| StoreError::UnknownGroup(group_id.to_string()))
    }

    pub fn group_mut(&mut self, group_id: &str) -> Result<&mut PersonGroup, StoreError> {
        self.groups
            .get_mut(group_id)
            .ok_or_else(|| StoreError::UnknownGroup(group_id.to_string()))
    }

    pub fn groups(&self) -> impl Iterator<Item = &PersonGroup> {
        self.groups.values()
    }

    /// Loads every `<group_id>.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, StoreError> {
        let mut store = Store::new();
        let entries = fs::read_dir(dir).map_err(|e| StoreError::Io {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let group = PersonGroup::load(&path)?;
            store.insert(group);
        }
        Ok(store)
    }

    pub fn group_path(dir: &Path, group_id: &str) -> PathBuf {
        dir.join(format!("{group_id}.json"))
    }
}
