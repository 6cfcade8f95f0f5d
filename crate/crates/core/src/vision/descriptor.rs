use super::VisionError;
use crate::model::{FaceBox, FaceDescriptor, GrayImage, DESCRIPTOR_LEN};

/// Side of the grid every crop is resampled to before matching.
pub const GRID: usize = 16;

pub fn crop(image: &GrayImage, region: FaceBox) -> Result<GrayImage, VisionError> {
    if !region.fits(image.width(), image.height()) {
        return Err(VisionError::InvalidBox(region));
    }
    let w = image.width() as usize;
    let mut pixels = Vec::with_capacity(region.width as usize * region.height as usize);
    for y in region.top..region.top + region.height {
        let start = y as usize * w + region.left as usize;
        pixels.extend_from_slice(&image.pixels()[start..start + region.width as usize]);
    }
    Ok(GrayImage::new(region.width, region.height, pixels)?)
}

/// Coverage of each source index by each of the `GRID` target cells along
/// one axis of length `len`.
fn axis_weights(len: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len as f64 / GRID as f64;
    (0..GRID)
        .map(|j| {
            let lo = j as f64 * step;
            let hi = (j + 1) as f64 * step;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|x| {
                    let w = (hi.min((x + 1) as f64) - lo.max(x as f64)).max(0.0);
                    (w > 0.0).then_some((x, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling to a 16x16 grid (row-major). Fractional pixel
/// coverage is weighted; upsampling replicates pixels.
pub fn resize_16(image: &GrayImage) -> [f64; DESCRIPTOR_LEN] {
    let w = image.width() as usize;
    let cols = axis_weights(w);
    let rows = axis_weights(image.height() as usize);
    let cell_area = (w as f64 / GRID as f64) * (image.height() as f64 / GRID as f64);
    let px = image.pixels();
    let mut out = [0.0; DESCRIPTOR_LEN];
    for (i, row_w) in rows.iter().enumerate() {
        for (j, col_w) in cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(y, wy) in row_w {
                let line = &px[y * w..(y + 1) * w];
                for &(x, wx) in col_w {
                    acc += wy * wx * f64::from(line[x]);
                }
            }
            out[i * GRID + j] = acc / cell_area;
        }
    }
    out
}

/// Mean-centered, unit-length 16x16 summary of a crop; all zeros for a
/// crop with no contrast.
pub fn extract_descriptor(crop: &GrayImage) -> FaceDescriptor {
    descriptor_from_grid(resize_16(crop))
}

pub fn descriptor_from_grid(mut grid: [f64; DESCRIPTOR_LEN]) -> FaceDescriptor {
    let mean = grid.iter().sum::<f64>() / DESCRIPTOR_LEN as f64;
    for v in grid.iter_mut() {
        *v -= mean;
    }
    FaceDescriptor::normalized(grid)
}
