//! Domain types shared by every part of the door: rasters, face boxes,
//! descriptors, enrolled persons and the event vocabulary.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of components in a [`FaceDescriptor`].
pub const DESCRIPTOR_LEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("box {0:?} does not fit inside a {1}x{2} image")]
    InvalidBox(FaceBox, u32, u32),
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidImage("zero dimensions".into()));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::InvalidImage(format!(
                "expected {expected} pixels, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// Axis-aligned face region in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceBox {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl FaceBox {
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.width > 0
            && self.height > 0
            && u64::from(self.left) + u64::from(self.width) <= u64::from(width)
            && u64::from(self.top) + u64::from(self.height) <= u64::from(height)
    }

    pub fn full(image: &GrayImage) -> Self {
        Self {
            left: 0,
            top: 0,
            width: image.width(),
            height: image.height(),
        }
    }
}

/// Fixed-length face summary. Either unit L2 norm or all zeros (the
/// degenerate descriptor of a uniform crop).
#[derive(Clone, PartialEq)]
pub struct FaceDescriptor(Box<[f64; DESCRIPTOR_LEN]>);

impl FaceDescriptor {
    pub fn zero() -> Self {
        Self(Box::new([0.0; DESCRIPTOR_LEN]))
    }

    /// Wraps raw components without normalizing them.
    pub fn from_components(values: [f64; DESCRIPTOR_LEN]) -> Self {
        Self(Box::new(values))
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        let arr: [f64; DESCRIPTOR_LEN] = values.try_into().ok()?;
        Some(Self::from_components(arr))
    }

    /// Scales `values` to unit length; returns the degenerate descriptor when
    /// the norm is below 1e-12.
    pub fn normalized(values: [f64; DESCRIPTOR_LEN]) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Self::zero();
        }
        Self(Box::new(values.map(|v| v / norm)))
    }

    pub fn values(&self) -> &[f64; DESCRIPTOR_LEN] {
        &self.0
    }

    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FaceDescriptor) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity, 0 against a degenerate descriptor. Dividing by
    /// the stored norms (not assuming 1) makes a descriptor's similarity
    /// with itself exactly 1.
    pub fn cosine(&self, other: &FaceDescriptor) -> f64 {
        let denom = (self.norm_squared() * other.norm_squared()).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        self.dot(other) / denom
    }

    fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl fmt::Debug for FaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FaceDescriptor([{:.4}, {:.4}, ..])",
            self.0[0], self.0[1]
        )
    }
}

/// Access role of an enrolled person.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Resident,
    Guest,
    Blacklisted,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Resident => "resident",
            Role::Guest => "guest",
            Role::Blacklisted => "blacklisted",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resident" => Ok(Role::Resident),
            "guest" => Ok(Role::Guest),
            "blacklisted" => Ok(Role::Blacklisted),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// Enrolled identity. `guest_expires_at` is present exactly when the role
/// is [`Role::Guest`].
#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub person_id: String,
    pub name: String,
    pub role: Role,
    pub descriptors: Vec<FaceDescriptor>,
    pub enrolled_at: u64,
    pub guest_expires_at: Option<u64>,
}

impl PersonRecord {
    pub fn role_matches_expiry(role: Role, guest_expires_at: Option<u64>) -> bool {
        (role == Role::Guest) == guest_expires_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    DoorbellPressed,
    FrameCaptured,
    FaceDetected,
    NoFaceFound,
    Identified,
    AccessGranted,
    AccessDenied,
    GuestExpired,
    BlacklistAlert,
    DoorUnlocked,
    DoorRelocked,
    UserEnrolled,
    RemoteUnlock,
    Greeting,
}

/// Why a door request was denied, or `Matched` for a grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    Matched,
    BelowThreshold,
    NoFace,
    GuestExpired,
    Blacklisted,
    RecognitionUnavailable,
}

/// Kind-specific event fields. Absent fields are omitted on the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_box: Option<FaceBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greeting: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DecisionReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relock_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub index: u64,
    pub width: u32,
    pub height: u32,
}

/// One record of the append-only door log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorEvent {
    pub seq: u64,
    pub ts_ms: u64,
    pub kind: EventKind,
    pub payload: EventPayload,
}

/// Greeting spoken (rendered) on a successful match.
pub fn greeting_for(name: &str) -> String {
    format!("welcome {name}")
}
