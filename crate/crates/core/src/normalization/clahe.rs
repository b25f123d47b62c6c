//! Contrast-limited adaptive histogram equalization over real-valued textures.
//!
//! Values are binned at 8-bit resolution. Each tile's histogram is clipped at
//! `clip_limit * tile_pixels / 256` and the clipped mass is spread evenly over
//! all bins before the cumulative mapping is built. Output pixels blend the
//! mappings of the (up to) four tiles whose centers surround them.

use serde::{Deserialize, Serialize};

use super::{NormalizationError, NormalizedTexture};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheConfig {
    pub enabled: bool,
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            clip_limit: 2.0,
            tiles_x: 8,
            tiles_y: 8,
        }
    }
}

struct TileGrid {
    // [start, end) per tile
    spans: Vec<(usize, usize)>,
    centers: Vec<f64>,
}

impl TileGrid {
    fn new(len: usize, tiles: usize) -> Self {
        let tiles = tiles.min(len);
        let spans: Vec<_> = (0..tiles)
            .map(|i| (i * len / tiles, (i + 1) * len / tiles))
            .collect();
        let centers = spans
            .iter()
            .map(|&(s, e)| (s + e - 1) as f64 / 2.0)
            .collect();
        Self { spans, centers }
    }

    /// Neighboring tiles around `pos` and the weight of the second one.
    fn locate(&self, pos: usize) -> (usize, usize, f64) {
        let p = pos as f64;
        let last = self.centers.len() - 1;
        if p <= self.centers[0] {
            return (0, 0, 0.0);
        }
        if p >= self.centers[last] {
            return (last, last, 0.0);
        }
        let i = self.centers.partition_point(|&c| c <= p) - 1;
        let w = (p - self.centers[i]) / (self.centers[i + 1] - self.centers[i]);
        (i, i + 1, w)
    }
}

#[inline]
fn bin(v: f32) -> usize {
    v.round().clamp(0.0, 255.0) as usize
}

fn validate(clip_limit: f64, tiles_x: usize, tiles_y: usize) -> Result<(), NormalizationError> {
    if clip_limit.is_nan() || clip_limit <= 0.0 || !clip_limit.is_finite() {
        return Err(NormalizationError::InvalidClahe(format!(
            "clip limit {clip_limit} must be positive"
        )));
    }
    if tiles_x == 0 || tiles_y == 0 {
        return Err(NormalizationError::InvalidClahe(
            "tile counts must be at least 1".into(),
        ));
    }
    Ok(())
}

fn tile_lut(
    tex: &NormalizedTexture,
    xs: (usize, usize),
    ys: (usize, usize),
    clip_limit: f64,
) -> [f64; 256] {
    let mut hist = [0f64; 256];
    for row in ys.0..ys.1 {
        for &v in &tex.row(row)[xs.0..xs.1] {
            hist[bin(v)] += 1.0;
        }
    }
    let n = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64;
    let clip = clip_limit * n / 256.0;
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > clip {
            excess += *h - clip;
            *h = clip;
        }
    }
    let share = excess / 256.0;
    let mut lut = [0f64; 256];
    let mut cdf = 0.0;
    for (slot, h) in lut.iter_mut().zip(hist.iter()) {
        cdf += h + share;
        *slot = (cdf * 255.0 / n).min(255.0);
    }
    lut
}

/// Per-tile mapping functions in row-major tile order.
pub fn tile_mappings(
    tex: &NormalizedTexture,
    clip_limit: f64,
    tiles_x: usize,
    tiles_y: usize,
) -> Result<Vec<[f64; 256]>, NormalizationError> {
    validate(clip_limit, tiles_x, tiles_y)?;
    let gx = TileGrid::new(tex.width(), tiles_x);
    let gy = TileGrid::new(tex.height(), tiles_y);
    let mut luts = Vec::with_capacity(gx.spans.len() * gy.spans.len());
    for &ys in &gy.spans {
        for &xs in &gx.spans {
            luts.push(tile_lut(tex, xs, ys, clip_limit));
        }
    }
    Ok(luts)
}

pub fn clahe(
    tex: &NormalizedTexture,
    clip_limit: f64,
    tiles_x: usize,
    tiles_y: usize,
) -> Result<NormalizedTexture, NormalizationError> {
    let luts = tile_mappings(tex, clip_limit, tiles_x, tiles_y)?;
    let gx = TileGrid::new(tex.width(), tiles_x);
    let gy = TileGrid::new(tex.height(), tiles_y);
    let ntx = gx.spans.len();
    let cols: Vec<_> = (0..tex.width()).map(|x| gx.locate(x)).collect();
    let mut values = Vec::with_capacity(tex.values().len());
    for y in 0..tex.height() {
        let (ty0, ty1, wy) = gy.locate(y);
        for (x, &(tx0, tx1, wx)) in cols.iter().enumerate() {
            let b = bin(tex.get(x, y));
            let top = luts[ty0 * ntx + tx0][b] * (1.0 - wx) + luts[ty0 * ntx + tx1][b] * wx;
            let bottom = luts[ty1 * ntx + tx0][b] * (1.0 - wx) + luts[ty1 * ntx + tx1][b] * wx;
            let v = top * (1.0 - wy) + bottom * wy;
            values.push(v.clamp(0.0, 255.0) as f32);
        }
    }
    NormalizedTexture::new(tex.width(), tex.height(), values)
}
