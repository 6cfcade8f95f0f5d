use crate::model::GrayImage;

/// Summed-area table with a zero first row and column: `at(x, y)` is the sum
/// of every pixel with column < x and row < y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    table: Vec<u64>,
}

impl IntegralImage {
    pub fn new(image: &GrayImage) -> Self {
        Self::build(image, u64::from)
    }

    /// Table over squared intensities.
    pub fn squared(image: &GrayImage) -> Self {
        Self::build(image, |p| u64::from(p) * u64::from(p))
    }

    fn build(image: &GrayImage, f: impl Fn(u8) -> u64) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let stride = w + 1;
        let mut table = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u64;
            for x in 0..w {
                row_sum += f(image.pixels()[y * w + x]);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        Self {
            width: image.width(),
            height: image.height(),
            table,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u64 {
        self.table[y as usize * (self.width as usize + 1) + x as usize]
    }

    /// Sum over columns `[left, left+width)` and rows `[top, top+height)`.
    pub fn rect_sum(&self, left: u32, top: u32, width: u32, height: u32) -> u64 {
        let (r, b) = (left + width, top + height);
        debug_assert!(r <= self.width && b <= self.height);
        self.at(r, b) + self.at(left, top) - self.at(r, top) - self.at(left, b)
    }

    pub fn total(&self) -> u64 {
        self.at(self.width, self.height)
    }
}

pub fn integral(image: &GrayImage) -> IntegralImage {
    IntegralImage::new(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(img: &GrayImage, l: u32, t: u32, w: u32, h: u32) -> u64 {
        let mut s = 0;
        for y in t..t + h {
            for x in l..l + w {
                s += u64::from(img.get(x, y));
            }
        }
        s
    }

    #[test]
    fn zero_image_zero_table() {
        let ii = integral(&GrayImage::filled(5, 3, 0).unwrap());
        assert!(ii.table.iter().all(|&v| v == 0));
    }

    #[test]
    fn two_by_two_total() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let ii = integral(&img);
        assert_eq!(ii.rect_sum(0, 0, 2, 2), 10);
        assert_eq!(ii.total(), 1 + 2 + 3 + 4);
        assert_eq!(ii.rect_sum(1, 1, 1, 1), 4);
    }

    #[test]
    fn every_rectangle_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = GrayImage::from_fn(8, 8, |_, _| rng.random()).unwrap();
        let ii = integral(&img);
        let sq = IntegralImage::squared(&img);
        for t in 0..8 {
            for l in 0..8 {
                for h in 1..=8 - t {
                    for w in 1..=8 - l {
                        assert_eq!(ii.rect_sum(l, t, w, h), naive(&img, l, t, w, h));
                    }
                }
            }
        }
        let naive_sq: u64 = img.pixels().iter().map(|&p| u64::from(p).pow(2)).sum();
        assert_eq!(sq.total(), naive_sq);
    }

    #[test]
    fn entry_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(5, 7, |_, _| rng.random()).unwrap();
        let ii = integral(&img);
        for y in 0..=7 {
            for x in 0..=5 {
                let expected: u64 = (0..y)
                    .flat_map(|r| (0..x).map(move |c| (c, r)))
                    .map(|(c, r)| u64::from(img.get(c, r)))
                    .sum();
                assert_eq!(ii.at(x, y), expected);
            }
        }
    }
}
