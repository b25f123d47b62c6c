use std::path::Path;

use super::NormalizationError;
use crate::imaging::GrayImage;

const DUMP_MAGIC: &[u8; 4] = b"MSAT";
const DUMP_VERSION: u32 = 1;
const DUMP_HEADER_LEN: usize = 16;

/// Polar iris texture. Column `c` is angle `2*pi*c/width`; row 0 lies on the
/// inner boundary and the last row on the outer boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTexture {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl NormalizedTexture {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, NormalizationError> {
        if width == 0 || height == 0 {
            return Err(NormalizationError::InvalidDimensions {
                width,
                height,
                reason: "zero dimension",
            });
        }
        if values.len() != width * height {
            return Err(NormalizationError::InvalidDimensions {
                width,
                height,
                reason: "value count does not match dimensions",
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=255.0).contains(*v))
        {
            return Err(NormalizationError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Rows `[start, start + count)` as a new texture.
    pub fn rows(&self, start: usize, count: usize) -> Result<Self, NormalizationError> {
        if count == 0 || start + count > self.height {
            return Err(NormalizationError::InvalidDimensions {
                width: self.width,
                height: count,
                reason: "row range outside the texture",
            });
        }
        Ok(Self {
            width: self.width,
            height: count,
            values: self.values[start * self.width..(start + count) * self.width].to_vec(),
        })
    }

    /// Rounds to 8-bit for export.
    pub fn to_gray_image(&self) -> GrayImage {
        let px = self.values.iter().map(|v| v.round() as u8).collect();
        GrayImage::new(self.width as u32, self.height as u32, px)
            .expect("texture dimensions are non-zero")
    }

    /// Vertical bilinear resampling to `new_height` rows. Row `r` maps to
    /// source position `r * (h - 1) / (new_height - 1)`.
    pub fn resample_rows(&self, new_height: usize) -> Result<Self, NormalizationError> {
        if new_height == 0 {
            return Err(NormalizationError::InvalidDimensions {
                width: self.width,
                height: new_height,
                reason: "zero height",
            });
        }
        if new_height == self.height {
            return Ok(self.clone());
        }
        let w = self.width;
        let mut values = Vec::with_capacity(w * new_height);
        for r in 0..new_height {
            let pos = if new_height == 1 {
                (self.height - 1) as f64 / 2.0
            } else {
                r as f64 * (self.height - 1) as f64 / (new_height - 1) as f64
            };
            let r0 = pos.floor() as usize;
            let r1 = (r0 + 1).min(self.height - 1);
            let f = pos - r0 as f64;
            for c in 0..w {
                let a = self.get(c, r0) as f64;
                let b = self.get(c, r1) as f64;
                values.push((a + (b - a) * f) as f32);
            }
        }
        Self::new(w, new_height, values)
    }
}

/// `MSAT` magic, then little-endian u32 version, width and height, then
/// `width * height` little-endian f32 values in row-major order.
pub fn encode_texture_dump(tex: &NormalizedTexture) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + 4 * tex.values.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&(tex.width as u32).to_le_bytes());
    out.extend_from_slice(&(tex.height as u32).to_le_bytes());
    for v in &tex.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_texture_dump(bytes: &[u8]) -> Result<NormalizedTexture, NormalizationError> {
    let dump = |m: &str| NormalizationError::Dump(m.to_string());
    if bytes.len() < DUMP_HEADER_LEN {
        return Err(dump("shorter than header"));
    }
    if &bytes[..4] != DUMP_MAGIC {
        return Err(dump("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != DUMP_VERSION {
        return Err(NormalizationError::Dump(format!(
            "unsupported version {version}"
        )));
    }
    let width = word(8) as usize;
    let height = word(12) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| dump("dimensions overflow"))?;
    let body = &bytes[DUMP_HEADER_LEN..];
    if body.len() != expected {
        return Err(NormalizationError::Dump(format!(
            "expected {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    NormalizedTexture::new(width, height, values)
}

pub fn save_texture_dump(
    tex: &NormalizedTexture,
    path: impl AsRef<Path>,
) -> Result<(), NormalizationError> {
    let path = path.as_ref();
    std::fs::write(path, encode_texture_dump(tex)).map_err(|e| NormalizationError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_texture_dump(path: impl AsRef<Path>) -> Result<NormalizedTexture, NormalizationError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| NormalizationError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    decode_texture_dump(&bytes)
}
