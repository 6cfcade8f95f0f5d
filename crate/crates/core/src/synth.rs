//! Deterministic synthetic camera frames for demos, replay scripts and
//! tests.
//!
//! A "face" is a bright one-pixel ring enclosing a 6x6 grid of patches
//! whose intensities are fixed by the identity seed. The variant seed moves
//! the face a few pixels and changes the sensor noise, so two variants of
//! one identity describe almost identically while different identities do
//! not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::GrayImage;

pub const FRAME_WIDTH: u32 = 80;
pub const FRAME_HEIGHT: u32 = 64;
const PATCHES: u32 = 6;
const PATCH: u32 = 6;
const RING: u8 = 235;
/// Side of the face square, ring included.
pub const FACE_SIDE: u32 = PATCHES * PATCH + 2;

fn identity_patches(identity: u64) -> [u8; (PATCHES * PATCHES) as usize] {
    let mut rng = ChaCha8Rng::seed_from_u64(identity ^ 0x5eed_face);
    let mut out = [0u8; (PATCHES * PATCHES) as usize];
    for v in out.iter_mut() {
        *v = rng.random_range(90..=225);
    }
    out
}

/// One camera frame showing `identity`. Same arguments, same pixels.
pub fn face_frame(identity: u64, variant: u64) -> GrayImage {
    let patches = identity_patches(identity);
    let mut rng = ChaCha8Rng::seed_from_u64(variant.wrapping_mul(0x9e37_79b9) ^ identity);
    let left = 20 + rng.random_range(0..=6u32);
    let top = 12 + rng.random_range(0..=6u32);
    let noise: Vec<i16> = (0..FRAME_WIDTH * FRAME_HEIGHT)
        .map(|_| rng.random_range(-3..=3))
        .collect();
    GrayImage::from_fn(FRAME_WIDTH, FRAME_HEIGHT, |x, y| {
        let n = noise[(y * FRAME_WIDTH + x) as usize];
        let inside = x >= left && x < left + FACE_SIDE && y >= top && y < top + FACE_SIDE;
        if !inside {
            return (15 + n * 4).clamp(0, 30) as u8;
        }
        let (fx, fy) = (x - left, y - top);
        if fx == 0 || fy == 0 || fx == FACE_SIDE - 1 || fy == FACE_SIDE - 1 {
            return RING;
        }
        let patch = patches[(((fy - 1) / PATCH) * PATCHES + (fx - 1) / PATCH) as usize];
        (i16::from(patch) + n).clamp(0, 255) as u8
    })
    .expect("frame dimensions are valid")
}

/// Featureless frame: nothing to detect.
pub fn blank_frame(level: u8) -> GrayImage {
    GrayImage::filled(FRAME_WIDTH, FRAME_HEIGHT, level).expect("frame dimensions are valid")
}
