//! PGM codec: binary (`P5`) and plain (`P2`) graymaps with maxval <= 255.
//!
//! Sample values are kept as stored; a maxval below 255 only bounds them.

use crate::model::{GrayImage, ImageError};

fn invalid(reason: impl Into<String>) -> ImageError {
    ImageError::InvalidImage(reason.into())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                invalid(format!("truncated header: missing {what}"))
            } else {
                invalid(format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.is_empty() {
        return Err(invalid("empty input"));
    }
    if bytes.len() < 2 {
        return Err(invalid("truncated magic"));
    }
    let plain = match &bytes[..2] {
        b"P5" => false,
        b"P2" => true,
        _ => return Err(invalid("unsupported magic")),
    };
    let mut header = Header { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(invalid("zero dimensions"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(invalid(format!("maxval {maxval} not in 1..=255")));
    }
    let count = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| invalid("dimensions overflow"))?;

    let pixels = if plain {
        let mut pixels = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let v = header.number("sample").map_err(|e| match e {
                ImageError::InvalidImage(r) if r.starts_with("truncated") => {
                    invalid("truncated pixel data")
                }
                other => other,
            })?;
            if v > maxval {
                return Err(invalid(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as u8);
        }
        pixels
    } else {
        // exactly one whitespace byte separates maxval from the raster
        let pos = header.pos;
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(invalid("missing raster separator"));
        }
        let data = &bytes[pos + 1..];
        if data.len() < count {
            return Err(invalid(format!(
                "truncated pixel data: {} of {count} bytes",
                data.len()
            )));
        }
        let pixels = data[..count].to_vec();
        if let Some(v) = pixels.iter().find(|&&v| u32::from(v) > maxval) {
            return Err(invalid(format!("sample {v} exceeds maxval {maxval}")));
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

/// Binary `P5` encoding with maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.pixel_count());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.pixels());
    out
}

/// Plain `P2` encoding, one image row per line.
pub fn encode_pgm_plain(image: &GrayImage) -> String {
    let mut out = format!("P2\n{} {}\n255\n", image.width(), image.height());
    for row in image.pixels().chunks(image.width() as usize) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
