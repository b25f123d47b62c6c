//! Overlapping horizontal micro-stripes of a normalized texture.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalization::NormalizedTexture;

pub const DEFAULT_STRIPE_HEIGHT: usize = 32;
pub const DEFAULT_STRIDE: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StripeError {
    #[error("stripe height {height} exceeds texture height {texture_height}")]
    TooTall {
        height: usize,
        texture_height: usize,
    },
    #[error("stripe height and stride must be at least 1")]
    ZeroSize,
    #[error("sample size must be odd, got {0}")]
    EvenSample(usize),
    #[error("cannot sample {requested} stripes from {available}")]
    NotEnoughStripes { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroStripe {
    pub row_offset: usize,
    pub texture: NormalizedTexture,
}

impl MicroStripe {
    pub fn height(&self) -> usize {
        self.texture.height()
    }

    pub fn width(&self) -> usize {
        self.texture.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripeSet {
    pub source_id: String,
    pub stride: usize,
    pub stripes: Vec<MicroStripe>,
}

impl StripeSet {
    pub fn len(&self) -> usize {
        self.stripes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stripes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StripeConfig {
    pub height: usize,
    pub stride: usize,
    /// Odd number of stripes drawn per image at evaluation; all when absent.
    pub sample_k: Option<usize>,
}

impl Default for StripeConfig {
    fn default() -> Self {
        Self {
            height: DEFAULT_STRIPE_HEIGHT,
            stride: DEFAULT_STRIDE,
            sample_k: None,
        }
    }
}

/// Number of stripes that fit without vertical padding.
pub fn stripe_count(texture_height: usize, height: usize, stride: usize) -> usize {
    if height == 0 || stride == 0 || height > texture_height {
        0
    } else {
        (texture_height - height) / stride + 1
    }
}

pub fn extract_stripes(
    tex: &NormalizedTexture,
    source_id: &str,
    height: usize,
    stride: usize,
) -> Result<StripeSet, StripeError> {
    if height == 0 || stride == 0 {
        return Err(StripeError::ZeroSize);
    }
    if height > tex.height() {
        return Err(StripeError::TooTall {
            height,
            texture_height: tex.height(),
        });
    }
    let stripes = (0..stripe_count(tex.height(), height, stride))
        .map(|i| {
            let row_offset = i * stride;
            MicroStripe {
                row_offset,
                texture: tex.rows(row_offset, height).expect("offset within texture"),
            }
        })
        .collect();
    Ok(StripeSet {
        source_id: source_id.to_string(),
        stride,
        stripes,
    })
}

/// Draws `k` distinct stripes uniformly without replacement, keeping row order.
pub fn sample_odd_stripes(set: &StripeSet, k: usize, seed: u64) -> Result<StripeSet, StripeError> {
    if k.is_multiple_of(2) {
        return Err(StripeError::EvenSample(k));
    }
    if k > set.len() {
        return Err(StripeError::NotEnoughStripes {
            requested: k,
            available: set.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, set.len(), k).into_vec();
    picked.sort_unstable();
    Ok(StripeSet {
        source_id: set.source_id.clone(),
        stride: set.stride,
        stripes: picked.into_iter().map(|i| set.stripes[i].clone()).collect(),
    })
}
