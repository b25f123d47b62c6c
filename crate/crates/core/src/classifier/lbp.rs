//! Uniform local binary patterns (8 neighbors, radius 1) pooled into
//! per-cell 59-bin histograms.

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::normalization::NormalizedTexture;

pub const UNIFORM_BINS: usize = 59;

const fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

/// Maps each 8-bit code to its histogram bin: uniform codes (at most two
/// circular 0/1 transitions) get bins 0..58 in ascending code order, all
/// others share bin 58.
const UNIFORM_MAP: [u8; 256] = {
    let mut map = [58u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if transitions(code as u8) <= 2 {
            map[code] = next;
            next += 1;
        }
        code += 1;
    }
    map
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub cells_x: usize,
    pub cells_y: usize,
}

impl FeatureConfig {
    /// 16x32-pixel cells, so a 32x512 stripe gets a 2x16 grid.
    pub fn for_stripe(height: usize, width: usize) -> Self {
        Self {
            cells_x: (width / 32).max(1),
            cells_y: (height / 16).max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.cells_x * self.cells_y * UNIFORM_BINS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self) -> String {
        format!("ulbp-p8r1-cells{}x{}", self.cells_x, self.cells_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub config_hash: String,
}

/// Basic LBP code: bit `n` is set when neighbor `n` is at least the center.
/// Neighbors run clockwise from the top-left pixel.
#[inline]
pub fn lbp_code(patch: [[u8; 3]; 3]) -> u8 {
    let c = patch[1][1];
    let ring = [
        patch[0][0],
        patch[0][1],
        patch[0][2],
        patch[1][2],
        patch[2][2],
        patch[2][1],
        patch[2][0],
        patch[1][0],
    ];
    ring.iter()
        .enumerate()
        .fold(0u8, |acc, (i, &n)| acc | (u8::from(n >= c) << i))
}

pub fn uniform_bin(code: u8) -> usize {
    UNIFORM_MAP[code as usize] as usize
}

pub fn lbp_features(
    tex: &NormalizedTexture,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, ClassifierError> {
    let (w, h) = (tex.width(), tex.height());
    if cfg.cells_x == 0 || cfg.cells_y == 0 || w / cfg.cells_x < 3 || h / cfg.cells_y < 3 {
        return Err(ClassifierError::GridTooFine {
            width: w,
            height: h,
            cells_x: cfg.cells_x,
            cells_y: cfg.cells_y,
        });
    }
    let q: Vec<u8> = tex
        .values()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let cell_of_col: Vec<usize> = (0..w).map(|x| x * cfg.cells_x / w).collect();
    let mut hist = vec![0f64; cfg.len()];
    let mut counts = vec![0u32; cfg.cells_x * cfg.cells_y];
    for y in 1..h - 1 {
        let cy = y * cfg.cells_y / h;
        for x in 1..w - 1 {
            let at = |dx: usize, dy: usize| q[(y + dy - 1) * w + (x + dx - 1)];
            let patch = [
                [at(0, 0), at(1, 0), at(2, 0)],
                [at(0, 1), at(1, 1), at(2, 1)],
                [at(0, 2), at(1, 2), at(2, 2)],
            ];
            let cell = cy * cfg.cells_x + cell_of_col[x];
            hist[cell * UNIFORM_BINS + uniform_bin(lbp_code(patch))] += 1.0;
            counts[cell] += 1;
        }
    }
    for (cell, &n) in counts.iter().enumerate() {
        let block = &mut hist[cell * UNIFORM_BINS..(cell + 1) * UNIFORM_BINS];
        let n = n as f64;
        block.iter_mut().for_each(|v| *v /= n);
    }
    Ok(FeatureVector {
        values: hist,
        config_hash: cfg.id(),
    })
}
