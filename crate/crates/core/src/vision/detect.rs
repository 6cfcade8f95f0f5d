//! Dominant-face detector: global intensity threshold, 4-connected
//! components, largest component wins.

use super::integral::IntegralImage;
use super::VisionError;
use crate::model::{FaceBox, GrayImage};

/// Smallest image the detector accepts on either axis.
pub const MIN_DETECT_SIDE: u32 = 4;

/// Foreground mask: `p > mean + 0.5 * stddev` (population), evaluated
/// exactly in integers.
///
/// With n pixels, sum S and sum of squares Q, the test is
/// `n*p - S > 0 && 4 * (n*p - S)^2 > n*Q - S^2`.
pub fn foreground_mask(image: &GrayImage) -> Vec<bool> {
    let sums = IntegralImage::new(image);
    let squares = IntegralImage::squared(image);
    let n = image.pixel_count() as i128;
    let s = i128::from(sums.total());
    let q = i128::from(squares.total());
    let spread = n * q - s * s;
    image
        .pixels()
        .iter()
        .map(|&p| {
            let d = n * i128::from(p) - s;
            d > 0 && 4 * d * d > spread
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub pixels: usize,
    pub bbox: FaceBox,
}

/// 4-connected components of `mask`, in order of their first pixel in
/// raster order.
pub fn components(mask: &[bool], width: u32, height: u32) -> Vec<Component> {
    let (w, h) = (width as usize, height as usize);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (w, h, 0, 0);
        let mut count = 0;
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = (i % w, i / w);
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(Component {
            pixels: count,
            bbox: FaceBox {
                left: min_x as u32,
                top: min_y as u32,
                width: (max_x - min_x + 1) as u32,
                height: (max_y - min_y + 1) as u32,
            },
        });
    }
    out
}

/// Bounding box of the largest foreground component. Ties go to the
/// smaller top, then smaller left, then the component met first in raster
/// order.
pub fn detect_face(image: &GrayImage, min_area_fraction: f64) -> Result<FaceBox, VisionError> {
    if image.width() < MIN_DETECT_SIDE || image.height() < MIN_DETECT_SIDE {
        return Err(VisionError::InvalidImage(format!(
            "image {}x{} is smaller than {MIN_DETECT_SIDE}x{MIN_DETECT_SIDE}",
            image.width(),
            image.height()
        )));
    }
    let mask = foreground_mask(image);
    let best = components(&mask, image.width(), image.height())
        .into_iter()
        .reduce(|best, c| {
            let better = c.pixels > best.pixels
                || (c.pixels == best.pixels
                    && (c.bbox.top, c.bbox.left) < (best.bbox.top, best.bbox.left));
            if better {
                c
            } else {
                best
            }
        })
        .ok_or(VisionError::NoFaceFound)?;
    let floor = min_area_fraction * image.pixel_count() as f64;
    if (best.pixels as f64) < floor {
        return Err(VisionError::NoFaceFound);
    }
    Ok(best.bbox)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_blocks(w: u32, h: u32, blocks: &[(u32, u32, u32, u32)]) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let hit = blocks
                .iter()
                .any(|&(l, t, bw, bh)| x >= l && x < l + bw && y >= t && y < t + bh);
            if hit {
                255
            } else {
                0
            }
        })
        .unwrap()
    }

    #[test]
    fn uniform_image_has_no_face() {
        let img = GrayImage::filled(8, 8, 7).unwrap();
        assert_eq!(detect_face(&img, 0.01), Err(VisionError::NoFaceFound));
    }

    #[test]
    fn corner_block() {
        let img = with_blocks(16, 16, &[(0, 0, 4, 4)]);
        assert_eq!(
            detect_face(&img, 0.01).unwrap(),
            FaceBox {
                left: 0,
                top: 0,
                width: 4,
                height: 4
            }
        );
    }

    #[test]
    fn larger_block_wins() {
        let img = with_blocks(16, 16, &[(1, 1, 5, 5), (10, 10, 2, 2)]);
        assert_eq!(
            detect_face(&img, 0.01).unwrap(),
            FaceBox {
                left: 1,
                top: 1,
                width: 5,
                height: 5
            }
        );
    }

    #[test]
    fn equal_blocks_tie_break_on_top_then_left() {
        let img = with_blocks(16, 16, &[(10, 2, 3, 3), (1, 2, 3, 3), (0, 9, 3, 3)]);
        assert_eq!(detect_face(&img, 0.0).unwrap().left, 1);
        assert_eq!(detect_face(&img, 0.0).unwrap().top, 2);
    }

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let mask = [true, false, false, true];
        assert_eq!(components(&mask, 2, 2).len(), 2);
    }

    #[test]
    fn area_floor_and_size_limits() {
        let img = with_blocks(16, 16, &[(3, 3, 1, 1)]);
        assert_eq!(detect_face(&img, 0.01), Err(VisionError::NoFaceFound));
        assert!(detect_face(&img, 0.0).is_ok());
        let tiny = GrayImage::filled(3, 8, 0).unwrap();
        assert!(matches!(
            detect_face(&tiny, 0.01),
            Err(VisionError::InvalidImage(_))
        ));
    }
}
