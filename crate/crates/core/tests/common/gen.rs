//! Seeded generators for random test inputs.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smartdoor_core::GrayImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random rectangles over a noisy background; sometimes flat, sometimes
/// pure noise.
pub fn blocks_image(rng: &mut impl Rng, w: u32, h: u32) -> GrayImage {
    let kind = rng.random_range(0..10);
    let base: u8 = rng.random();
    let noise: i32 = match kind {
        0 => 0,
        1 => 255,
        _ => rng.random_range(0..40),
    };
    let mut px: Vec<i32> = (0..w * h)
        .map(|_| {
            base as i32
                + if noise > 0 {
                    rng.random_range(-noise..=noise)
                } else {
                    0
                }
        })
        .collect();
    if kind >= 2 {
        for _ in 0..rng.random_range(0..6) {
            let bw = rng.random_range(1..=w);
            let bh = rng.random_range(1..=h);
            let x0 = rng.random_range(0..=w - bw);
            let y0 = rng.random_range(0..=h - bh);
            let v: i32 = rng.random_range(0..=255);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    px[(y * w + x) as usize] = v + rng.random_range(-noise / 4..=noise / 4);
                }
            }
        }
    }
    GrayImage::new(
        w,
        h,
        px.into_iter().map(|v| v.clamp(0, 255) as u8).collect(),
    )
    .unwrap()
}

/// Non-uniform image with even values in 20..=120.
pub fn even_crop(rng: &mut impl Rng) -> GrayImage {
    loop {
        let w = rng.random_range(1..=40);
        let h = rng.random_range(1..=40);
        let img = GrayImage::from_fn(w, h, |_, _| 2 * rng.random_range(10..=60u8)).unwrap();
        if img.pixels().iter().any(|&p| p != img.pixels()[0]) {
            return img;
        }
    }
}

pub fn affine(img: &GrayImage, a: f64, b: f64) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let v = a * img.get(x, y) as f64 + b;
        assert!(
            (0.0..=255.0).contains(&v) && v.fract() == 0.0,
            "clipping or rounding: {v}"
        );
        v as u8
    })
    .unwrap()
}

/// A framed random texture on a dark field: the frame is the dominant
/// component, so the detected crop is the framed square.
pub fn framed_face(rng: &mut impl Rng) -> GrayImage {
    let side = rng.random_range(10..=16u32);
    let (w, h) = (24u32, 24u32);
    let left = rng.random_range(0..=w - side);
    let top = rng.random_range(0..=h - side);
    let texture: Vec<u8> = (0..side * side)
        .map(|_| rng.random_range(60..=200))
        .collect();
    let dark: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..=20)).collect();
    GrayImage::from_fn(w, h, |x, y| {
        let inside = x >= left && x < left + side && y >= top && y < top + side;
        if !inside {
            return dark[(y * w + x) as usize];
        }
        let (fx, fy) = (x - left, y - top);
        if fx == 0 || fy == 0 || fx == side - 1 || fy == side - 1 {
            255
        } else {
            texture[(fy * side + fx) as usize]
        }
    })
    .unwrap()
}

/// `img` with every pixel nudged by at most `amount`, staying in range.
pub fn jitter(rng: &mut impl Rng, img: &GrayImage, amount: i32) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        (img.get(x, y) as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8
    })
    .unwrap()
}
