//! Grayscale rasters, subpixel sampling and PNG / binary PGM I/O.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {reason}")]
    Unwritable { path: String, reason: String },
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("malformed image data: {0}")]
    Format(String),
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BufferLength { width: u32, height: u32, len: usize },
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if pixels.len() != width as usize * height as usize {
            return Err(ImageError::BufferLength {
                width,
                height,
                len: pixels.len(),
            });
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

    /// Builds an image by evaluating `f(x, y)` at every pixel.
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

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// A fractional pixel position. Integer coordinates address pixel centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelSample {
    pub x: f64,
    pub y: f64,
}

impl SubpixelSample {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Bilinear interpolation of the four pixels around `p`, with coordinates
/// clamped to the image border.
pub fn bilinear_sample(img: &GrayImage, p: SubpixelSample) -> f64 {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    // f64::max maps NaN to the other operand, so non-finite input lands on the border.
    let x = p.x.max(0.0).min(max_x);
    let y = p.y.max(0.0).min(max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);

    let p00 = img.get(x0, y0) as f64;
    let p10 = img.get(x1, y0) as f64;
    let p01 = img.get(x0, y1) as f64;
    let p11 = img.get(x1, y1) as f64;
    let top = p00 + (p10 - p00) * fx;
    let bottom = p01 + (p11 - p01) * fx;
    top + (bottom - top) * fy
}

/// ITU-R BT.601 luma, rounded to nearest.
pub fn bt601_luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Decodes PNG or binary PGM bytes. Color input is reduced to BT.601 luma.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let format = image::guess_format(bytes).map_err(|_| ImageError::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(ImageError::UnsupportedFormat);
    }
    let reader = ImageReader::with_format(Cursor::new(bytes), format);
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => ImageError::UnsupportedFormat,
        other => ImageError::Format(other.to_string()),
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage, ImageError> {
    let (width, height) = (img.width(), img.height());
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height });
    }
    let pixels = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| bt601_luma(p.0[0], p.0[1], p.0[2]))
            .collect()
    } else {
        img.to_luma8().into_raw()
    };
    GrayImage::new(width, height, pixels)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Png,
    Pgm,
}

impl RasterFormat {
    /// Picks the format from a file extension; anything but `.pgm` is PNG.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => RasterFormat::Pgm,
            _ => RasterFormat::Png,
        }
    }
}

pub fn encode_image(img: &GrayImage, format: RasterFormat) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    match format {
        RasterFormat::Png => {
            let buf = image::GrayImage::from_raw(img.width, img.height, img.pixels.clone())
                .expect("buffer length checked at construction");
            buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
                .map_err(|e| ImageError::Format(e.to_string()))?;
        }
        RasterFormat::Pgm => {
            out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
            out.extend_from_slice(&img.pixels);
        }
    }
    Ok(out)
}

/// Writes PNG, or binary PGM when the path ends in `.pgm`.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_image(img, RasterFormat::from_path(path))?;
    std::fs::write(path, bytes).map_err(|e| ImageError::Unwritable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
