use std::f64::consts::PI;

use super::{NormalizationError, NormalizedTexture};
use crate::imaging::{bilinear_sample, GrayImage, SubpixelSample};
use crate::segmentation::ExtendedBoundaries;

pub const DEFAULT_TEXTURE_WIDTH: usize = 512;
pub const DEFAULT_TEXTURE_HEIGHT: usize = 64;

/// Rubber-sheet unwrapping with linear radial interpolation between
/// the inner and outer boundary points of each angle.
pub fn rubber_sheet(
    img: &GrayImage,
    b: &ExtendedBoundaries,
    width: usize,
    height: usize,
) -> Result<NormalizedTexture, NormalizationError> {
    if width < 2 || height < 2 {
        return Err(NormalizationError::InvalidDimensions {
            width,
            height,
            reason: "rubber sheet needs at least 2x2 samples",
        });
    }
    let mut values = vec![0f32; width * height];
    for c in 0..width {
        let theta = 2.0 * PI * c as f64 / width as f64;
        let (ix, iy) = b.inner.point_at(theta);
        let (ox, oy) = b.outer.point_at(theta);
        for r in 0..height {
            let t = r as f64 / (height - 1) as f64;
            let p = SubpixelSample::new((1.0 - t) * ix + t * ox, (1.0 - t) * iy + t * oy);
            values[r * width + c] = bilinear_sample(img, p) as f32;
        }
    }
    NormalizedTexture::new(width, height, values)
}
