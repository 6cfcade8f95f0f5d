//! Slow, obviously-correct reference implementations.

#![allow(dead_code)]

use smartdoor_core::{FaceBox, GrayImage};

/// Foreground test p > mu + sigma/2, in exact integers. With n pixels and
/// S their sum, n^2 sigma^2 = sum_i (n p_i - S)^2 / n, so the test becomes
/// n p - S > 0 and 4 n (n p - S)^2 > sum_i (n p_i - S)^2.
pub fn mask(img: &GrayImage) -> Vec<bool> {
    let px = img.pixels();
    let n = px.len() as i128;
    let s: i128 = px.iter().map(|&p| p as i128).sum();
    let dev2: i128 = px.iter().map(|&p| (n * p as i128 - s).pow(2)).sum();
    px.iter()
        .map(|&p| {
            let d = n * p as i128 - s;
            d > 0 && 4 * n * d * d > dev2
        })
        .collect()
}

/// Labels every foreground pixel with the smallest raster index in its
/// 4-connected component, by propagating minima until nothing changes.
pub fn labels(mask: &[bool], w: usize, h: usize) -> Vec<Option<usize>> {
    let mut lab: Vec<Option<usize>> = (0..w * h).map(|i| mask[i].then_some(i)).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let Some(mut best) = lab[i] else { continue };
                let mut look = |j: usize| {
                    if let Some(l) = lab[j] {
                        best = best.min(l);
                    }
                };
                if x > 0 {
                    look(i - 1);
                }
                if x + 1 < w {
                    look(i + 1);
                }
                if y > 0 {
                    look(i - w);
                }
                if y + 1 < h {
                    look(i + w);
                }
                if Some(best) != lab[i] {
                    lab[i] = Some(best);
                    changed = true;
                }
            }
        }
        if !changed {
            return lab;
        }
    }
}

/// `None` means no face.
pub fn detect(img: &GrayImage, min_area_fraction: f64) -> Option<FaceBox> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let lab = labels(&mask(img), w, h);
    let mut roots: Vec<usize> = lab.iter().flatten().copied().collect();
    roots.sort_unstable();
    roots.dedup();
    // (count, top, left, root, box)
    let mut best: Option<(usize, usize, usize, usize, FaceBox)> = None;
    for root in roots {
        let cells: Vec<(usize, usize)> = (0..w * h)
            .filter(|&i| lab[i] == Some(root))
            .map(|i| (i % w, i / w))
            .collect();
        let left = cells.iter().map(|c| c.0).min().unwrap();
        let right = cells.iter().map(|c| c.0).max().unwrap();
        let top = cells.iter().map(|c| c.1).min().unwrap();
        let bottom = cells.iter().map(|c| c.1).max().unwrap();
        let b = FaceBox {
            left: left as u32,
            top: top as u32,
            width: (right - left + 1) as u32,
            height: (bottom - top + 1) as u32,
        };
        let better = match &best {
            None => true,
            Some((n, t, l, r, _)) => {
                (cells.len(), std::cmp::Reverse((top, left, root)))
                    > (*n, std::cmp::Reverse((*t, *l, *r)))
            }
        };
        if better {
            best = Some((cells.len(), top, left, root, b));
        }
    }
    let (count, .., b) = best?;
    (count as f64 >= min_area_fraction * (w * h) as f64).then_some(b)
}

pub fn crop(img: &GrayImage, b: FaceBox) -> GrayImage {
    GrayImage::from_fn(b.width, b.height, |x, y| img.get(x + b.left, y + b.top)).unwrap()
}

/// Area-average onto 16x16 by integrating every source pixel's unit square
/// against every target cell.
pub fn resize16(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cw, ch) = (w / 16.0, h / 16.0);
    let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a1.min(b1) - a0.max(b0)).max(0.0);
    let mut out = vec![0.0; 256];
    for i in 0..16 {
        for j in 0..16 {
            let (x0, x1) = (j as f64 * cw, (j + 1) as f64 * cw);
            let (y0, y1) = (i as f64 * ch, (i + 1) as f64 * ch);
            let mut acc = 0.0;
            for y in 0..img.height() {
                let oy = overlap(y as f64, y as f64 + 1.0, y0, y1);
                if oy == 0.0 {
                    continue;
                }
                for x in 0..img.width() {
                    let ox = overlap(x as f64, x as f64 + 1.0, x0, x1);
                    acc += ox * oy * img.get(x, y) as f64;
                }
            }
            out[i * 16 + j] = acc / (cw * ch);
        }
    }
    out
}

pub fn descriptor(crop: &GrayImage) -> Vec<f64> {
    let g = resize16(crop);
    let mean = g.iter().sum::<f64>() / 256.0;
    let c: Vec<f64> = g.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return vec![0.0; 256];
    }
    c.iter().map(|v| v / norm).collect()
}

/// Detect, crop, describe.
pub fn describe(img: &GrayImage, min_area_fraction: f64) -> Option<Vec<f64>> {
    detect(img, min_area_fraction).map(|b| descriptor(&crop(img, b)))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Persons in enrollment order, each with its descriptors.
pub fn identify(
    persons: &[(String, Vec<Vec<f64>>)],
    query: &[f64],
    threshold: f64,
    max_candidates: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = persons
        .iter()
        .filter(|(_, ds)| !ds.is_empty())
        .map(|(id, ds)| {
            let best = ds
                .iter()
                .map(|d| dot(d, query))
                .fold(f64::NEG_INFINITY, f64::max);
            (id.clone(), best.clamp(0.0, 1.0))
        })
        .filter(|(_, c)| *c >= threshold)
        .collect();
    // stable: equal confidences keep enrollment order
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    scored.truncate(max_candidates);
    scored
}
