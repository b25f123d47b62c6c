//! Polar unwrapping of the extended annulus and contrast enhancement.

mod clahe;
mod rubber_sheet;
mod texture;

pub use clahe::{clahe, tile_mappings, ClaheConfig};
pub use rubber_sheet::{rubber_sheet, DEFAULT_TEXTURE_HEIGHT, DEFAULT_TEXTURE_WIDTH};
pub use texture::{
    decode_texture_dump, encode_texture_dump, load_texture_dump, save_texture_dump,
    NormalizedTexture,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalizationError {
    #[error("texture dimensions {width}x{height} invalid: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("texture value {value} at index {index} outside [0, 255]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("invalid CLAHE parameters: {0}")]
    InvalidClahe(String),
    #[error("malformed texture dump: {0}")]
    Dump(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}
