//! System configuration: a flat JSON object whose keys are the field names
//! of [`SystemConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("ConfigInvalid({field}): {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

/// Validated configuration. Construct through [`validate_config`] or
/// [`SystemConfig::from_json`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Seconds the door stays unlocked after a grant.
    pub relock_timeout: f64,
    pub identify_confidence_threshold: f64,
    pub max_candidates: u32,
    pub detection_area_fraction_min: f64,
    /// Milliseconds between relay drive and solenoid movement.
    pub solenoid_latency: u64,
    /// Seconds a detected face id stays usable.
    pub face_id_ttl: u64,
    pub admin_token: String,
    pub recognition_endpoint: String,
    pub person_group_id: String,
    /// Key sent as `X-Api-Key` to the recognition service.
    pub api_key: String,
    /// Milliseconds within which repeated doorbell presses are dropped.
    pub doorbell_debounce: u64,
    pub admin_listen: String,
    pub faceapi_listen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
}

/// Parsed but unchecked configuration; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub relock_timeout: Option<f64>,
    pub identify_confidence_threshold: Option<f64>,
    pub max_candidates: Option<i64>,
    pub detection_area_fraction_min: Option<f64>,
    pub solenoid_latency: Option<i64>,
    pub face_id_ttl: Option<i64>,
    pub admin_token: Option<String>,
    pub recognition_endpoint: Option<String>,
    pub person_group_id: Option<String>,
    pub api_key: Option<String>,
    pub doorbell_debounce: Option<i64>,
    pub admin_listen: Option<String>,
    pub faceapi_listen: Option<String>,
    pub event_log: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub frames_dir: Option<PathBuf>,
}

pub const DEFAULT_RELOCK_TIMEOUT_S: f64 = 5.0;
pub const DEFAULT_THRESHOLD: f64 = 0.80;
pub const DEFAULT_MAX_CANDIDATES: u32 = 1;
pub const DEFAULT_AREA_FRACTION_MIN: f64 = 0.01;
pub const DEFAULT_SOLENOID_LATENCY_MS: u64 = 50;
pub const DEFAULT_FACE_ID_TTL_S: u64 = 600;
pub const DEFAULT_DEBOUNCE_MS: u64 = 200;
pub const DEFAULT_ADMIN_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_FACEAPI_LISTEN: &str = "127.0.0.1:8090";

fn required(value: Option<String>, field: &str) -> Result<String, ConfigError> {
    match value {
        None => Err(ConfigError::invalid(field, "missing required field")),
        Some(v) if v.is_empty() => Err(ConfigError::invalid(field, "must not be empty")),
        Some(v) => Ok(v),
    }
}

fn non_negative(value: Option<i64>, default: u64, field: &str) -> Result<u64, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) if v < 0 => Err(ConfigError::invalid(field, "must be non-negative")),
        Some(v) => Ok(v as u64),
    }
}

pub fn validate_config(raw: RawConfig) -> Result<SystemConfig, ConfigError> {
    let relock_timeout = raw.relock_timeout.unwrap_or(DEFAULT_RELOCK_TIMEOUT_S);
    if !relock_timeout.is_finite() || relock_timeout <= 0.0 {
        return Err(ConfigError::invalid("relock_timeout", "must be > 0"));
    }
    if (relock_timeout * 1000.0).round() < 1.0 {
        return Err(ConfigError::invalid(
            "relock_timeout",
            "must be at least one millisecond",
        ));
    }

    let threshold = raw
        .identify_confidence_threshold
        .unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ConfigError::invalid(
            "identify_confidence_threshold",
            "must lie in [0, 1]",
        ));
    }

    let max_candidates = match raw.max_candidates {
        None => DEFAULT_MAX_CANDIDATES,
        Some(v) if v < 1 || v > i64::from(u32::MAX) => {
            return Err(ConfigError::invalid("max_candidates", "must be >= 1"))
        }
        Some(v) => v as u32,
    };

    let area = raw
        .detection_area_fraction_min
        .unwrap_or(DEFAULT_AREA_FRACTION_MIN);
    if !(0.0..=1.0).contains(&area) {
        return Err(ConfigError::invalid(
            "detection_area_fraction_min",
            "must lie in [0, 1]",
        ));
    }

    let solenoid_latency = non_negative(
        raw.solenoid_latency,
        DEFAULT_SOLENOID_LATENCY_MS,
        "solenoid_latency",
    )?;
    let face_id_ttl = non_negative(raw.face_id_ttl, DEFAULT_FACE_ID_TTL_S, "face_id_ttl")?;
    if face_id_ttl == 0 {
        return Err(ConfigError::invalid("face_id_ttl", "must be > 0"));
    }
    let doorbell_debounce = non_negative(
        raw.doorbell_debounce,
        DEFAULT_DEBOUNCE_MS,
        "doorbell_debounce",
    )?;

    let recognition_endpoint = required(raw.recognition_endpoint, "recognition_endpoint")?;
    if !(recognition_endpoint.starts_with("http://")
        || recognition_endpoint.starts_with("https://"))
    {
        return Err(ConfigError::invalid(
            "recognition_endpoint",
            "must be an http:// or https:// URL",
        ));
    }
    let person_group_id = required(raw.person_group_id, "person_group_id")?;
    if !crate::store::valid_group_id(&person_group_id) {
        return Err(ConfigError::invalid(
            "person_group_id",
            "must match [a-z0-9_-]{1,64}",
        ));
    }

    Ok(SystemConfig {
        relock_timeout,
        identify_confidence_threshold: threshold,
        max_candidates,
        detection_area_fraction_min: area,
        solenoid_latency,
        face_id_ttl,
        admin_token: required(raw.admin_token, "admin_token")?,
        recognition_endpoint,
        person_group_id,
        api_key: required(raw.api_key, "api_key")?,
        doorbell_debounce,
        admin_listen: raw
            .admin_listen
            .unwrap_or_else(|| DEFAULT_ADMIN_LISTEN.to_string()),
        faceapi_listen: raw
            .faceapi_listen
            .unwrap_or_else(|| DEFAULT_FACEAPI_LISTEN.to_string()),
        event_log: raw.event_log,
        store_dir: raw.store_dir,
        frames_dir: raw.frames_dir,
    })
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::invalid("<document>", e.to_string()))?;
        validate_config(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn relock_timeout_ms(&self) -> u64 {
        (self.relock_timeout * 1000.0).round() as u64
    }

    pub fn face_id_ttl_ms(&self) -> u64 {
        self.face_id_ttl.saturating_mul(1000)
    }

    /// Minimal valid configuration, handy for tests and the simulator.
    pub fn for_tests() -> Self {
        validate_config(RawConfig {
            admin_token: Some("admin-secret".into()),
            recognition_endpoint: Some("http://127.0.0.1:8090".into()),
            person_group_id: Some("home".into()),
            api_key: Some("face-key".into()),
            ..Default::default()
        })
        .expect("test config is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RawConfig {
        RawConfig {
            admin_token: Some("t".into()),
            recognition_endpoint: Some("http://localhost:1".into()),
            person_group_id: Some("home".into()),
            api_key: Some("k".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_pass_through() {
        let cfg = validate_config(RawConfig {
            relock_timeout: Some(5.0),
            identify_confidence_threshold: Some(0.8),
            ..base()
        })
        .unwrap();
        assert_eq!(cfg.relock_timeout, 5.0);
        assert_eq!(cfg.identify_confidence_threshold, 0.8);
        assert_eq!(cfg.max_candidates, 1);
        assert_eq!(cfg.solenoid_latency, 50);
        assert_eq!(cfg.face_id_ttl, 600);
        assert_eq!(cfg.detection_area_fraction_min, 0.01);
        assert_eq!(cfg.relock_timeout_ms(), 5000);
    }

    #[test]
    fn zero_relock_timeout_rejected() {
        let err = validate_config(RawConfig {
            relock_timeout: Some(0.0),
            ..base()
        })
        .unwrap_err();
        assert_eq!(err.field(), Some("relock_timeout"));
    }

    #[test]
    fn threshold_out_of_range_rejected() {
        let err = validate_config(RawConfig {
            identify_confidence_threshold: Some(1.5),
            ..base()
        })
        .unwrap_err();
        assert_eq!(err.field(), Some("identify_confidence_threshold"));
    }

    #[test]
    fn missing_required_field() {
        let err = validate_config(RawConfig {
            admin_token: None,
            ..base()
        })
        .unwrap_err();
        assert_eq!(err.field(), Some("admin_token"));
    }

    #[test]
    fn bad_group_id_and_unknown_keys() {
        let err = validate_config(RawConfig {
            person_group_id: Some("HOME!".into()),
            ..base()
        })
        .unwrap_err();
        assert_eq!(err.field(), Some("person_group_id"));

        let err = SystemConfig::from_json(r#"{"relock_timout": 3}"#).unwrap_err();
        assert_eq!(err.field(), Some("<document>"));
    }

    #[test]
    fn json_round_trip() {
        let cfg = validate_config(RawConfig {
            relock_timeout: Some(2.5),
            event_log: Some("/tmp/events.jsonl".into()),
            ..base()
        })
        .unwrap();
        let again = SystemConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }
}
