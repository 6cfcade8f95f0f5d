//! On-device vision: PGM codec, integral images, face detection, cropping
//! and descriptor extraction.

pub mod descriptor;
pub mod detect;
pub mod integral;
pub mod pgm;

use thiserror::Error;

use crate::model::{FaceBox, FaceDescriptor, GrayImage, ImageError};

pub use descriptor::{crop, descriptor_from_grid, extract_descriptor, resize_16};
pub use detect::detect_face;
pub use integral::{integral, IntegralImage};
pub use pgm::{decode_pgm, encode_pgm, encode_pgm_plain};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VisionError {
    #[error("InvalidImage: {0}")]
    InvalidImage(String),
    #[error("InvalidBox: {0:?}")]
    InvalidBox(FaceBox),
    #[error("NoFaceFound")]
    NoFaceFound,
}

impl From<ImageError> for VisionError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::InvalidImage(r) => VisionError::InvalidImage(r),
            ImageError::InvalidBox(b, _, _) => VisionError::InvalidBox(b),
        }
    }
}

/// Result of running the whole local pipeline on one frame.
#[derive(Debug, Clone)]
pub struct FaceCrop {
    pub region: FaceBox,
    pub crop: GrayImage,
}

/// Detect the dominant face and cut it out.
pub fn detect_and_crop(image: &GrayImage, min_area_fraction: f64) -> Result<FaceCrop, VisionError> {
    let region = detect_face(image, min_area_fraction)?;
    let crop = crop(image, region)?;
    Ok(FaceCrop { region, crop })
}

/// Detect, crop and describe.
pub fn analyze(
    image: &GrayImage,
    min_area_fraction: f64,
) -> Result<(FaceBox, FaceDescriptor), VisionError> {
    let FaceCrop { region, crop } = detect_and_crop(image, min_area_fraction)?;
    Ok((region, extract_descriptor(&crop)))
}
