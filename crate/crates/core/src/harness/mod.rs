//! Manifests, synthetic data, per-image preprocessing and experiment protocols.

mod config;
mod experiment;
mod manifest;
mod synth;

pub use config::{
    load_json_text, parse_experiment_config, parse_pipeline_config, ExperimentConfig,
    PipelineConfig, Protocol, CONFIG_FORMAT_VERSION,
};
pub use experiment::{
    run_experiment, sha256_hex, ExperimentReport, Provenance, VariantOutcome,
    EXPERIMENT_FORMAT_VERSION,
};
pub use manifest::{
    load_manifest, parse_manifest, write_manifest, LensType, Manifest, ManifestError,
    ManifestRecord, SegmentationRef, Split, MANIFEST_HEADER,
};
pub use synth::{
    eye_specs, render_eye, synth_generate, ArtifactParams, ArtifactType, EyeSpec, SynthError,
    SynthOutput, SynthParams, TextureParams, MANIFEST_FILE, SEGMENTATION_FILE,
    SYNTH_FORMAT_VERSION,
};

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::fusion::FusionError;
use crate::imaging::{load_image, GrayImage, ImageError};
use crate::metrics::MetricsError;
use crate::normalization::{clahe, rubber_sheet, NormalizationError, NormalizedTexture};
use crate::rings::RingError;
use crate::segmentation::{
    detect_circles, extend_boundaries, load_segmentations, ExtendedBoundaries, Segmentation,
    SegmentationError,
};
use crate::stripes::StripeError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("protocol {protocol}: {reason}")]
    Protocol {
        protocol: &'static str,
        reason: String,
    },
    #[error("{image_id}: {source}")]
    Image {
        image_id: String,
        #[source]
        source: ImageError,
    },
    #[error("{image_id}: {source}")]
    Segmentation {
        image_id: String,
        #[source]
        source: Box<SegmentationError>,
    },
    #[error("{image_id}: segmentation_ref {reference}: {reason}")]
    SegmentationRef {
        image_id: String,
        reference: String,
        reason: String,
    },
    #[error("{image_id}: {source}")]
    Normalization {
        image_id: String,
        #[source]
        source: NormalizationError,
    },
    #[error(transparent)]
    Stripes(#[from] StripeError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Rings(#[from] RingError),
    #[error("i/o on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

/// Extended boundaries, unwrapping and optional CLAHE for one image.
pub fn preprocess(
    img: &GrayImage,
    seg: &Segmentation,
    cfg: &PipelineConfig,
) -> Result<(ExtendedBoundaries, NormalizedTexture), PreprocessError> {
    let b = extend_boundaries(seg, cfg.s1, cfg.s2)?;
    let mut tex = rubber_sheet(img, &b, cfg.texture_width, cfg.texture_height)?;
    if cfg.clahe.enabled {
        tex = clahe(
            &tex,
            cfg.clahe.clip_limit,
            cfg.clahe.tiles_x,
            cfg.clahe.tiles_y,
        )?;
    }
    Ok((b, tex))
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Normalization(#[from] NormalizationError),
}

/// Segmentation files referenced by a manifest, each loaded once.
#[derive(Debug, Default)]
pub struct SegmentationCache {
    files: HashMap<PathBuf, Vec<Segmentation>>,
}

impl SegmentationCache {
    pub fn load(manifest: &Manifest, records: &[ManifestRecord]) -> Result<Self, HarnessError> {
        let mut files = HashMap::new();
        for record in records {
            let Some(reference) = &record.segmentation_ref else {
                continue;
            };
            let parsed = SegmentationRef::parse(reference).map_err(|reason| {
                HarnessError::SegmentationRef {
                    image_id: record.image_id.clone(),
                    reference: reference.clone(),
                    reason,
                }
            })?;
            let path = manifest.resolve(&parsed.path);
            if let Entry::Vacant(slot) = files.entry(path) {
                let segs = load_segmentations(slot.key()).map_err(|source| {
                    HarnessError::Segmentation {
                        image_id: record.image_id.clone(),
                        source: Box::new(source),
                    }
                })?;
                slot.insert(segs);
            }
        }
        Ok(Self { files })
    }

    /// Segmentation for `record`: from its reference, else detected on `img`.
    pub fn resolve(
        &self,
        manifest: &Manifest,
        record: &ManifestRecord,
        img: &GrayImage,
        cfg: &PipelineConfig,
    ) -> Result<Segmentation, HarnessError> {
        let Some(reference) = &record.segmentation_ref else {
            return detect_circles(img, &cfg.detector).map_err(|source| {
                HarnessError::Segmentation {
                    image_id: record.image_id.clone(),
                    source: Box::new(source),
                }
            });
        };
        let ref_err = |reason: String| HarnessError::SegmentationRef {
            image_id: record.image_id.clone(),
            reference: reference.clone(),
            reason,
        };
        let parsed = SegmentationRef::parse(reference).map_err(ref_err)?;
        let segs = self
            .files
            .get(&manifest.resolve(&parsed.path))
            .ok_or_else(|| ref_err("segmentation file not loaded".into()))?;
        match parsed.index {
            Some(i) => segs.get(i).copied().ok_or_else(|| {
                ref_err(format!("record {i} out of range ({} records)", segs.len()))
            }),
            None if segs.len() == 1 => Ok(segs[0]),
            None => Err(ref_err(format!(
                "expected one record, found {}",
                segs.len()
            ))),
        }
    }
}

/// Loads the image of `record`.
pub fn load_record_image(
    manifest: &Manifest,
    record: &ManifestRecord,
) -> Result<GrayImage, HarnessError> {
    load_image(manifest.resolve(&record.path)).map_err(|source| HarnessError::Image {
        image_id: record.image_id.clone(),
        source,
    })
}

/// Loads, segments and normalizes `records` in parallel, preserving order.
pub fn preprocess_records(
    manifest: &Manifest,
    records: &[ManifestRecord],
    cfg: &PipelineConfig,
) -> Result<Vec<NormalizedTexture>, HarnessError> {
    use rayon::prelude::*;
    let cache = SegmentationCache::load(manifest, records)?;
    records
        .par_iter()
        .map(|record| {
            let img = load_record_image(manifest, record)?;
            let seg = cache.resolve(manifest, record, &img, cfg)?;
            preprocess(&img, &seg, cfg)
                .map(|(_, tex)| tex)
                .map_err(|e| e.with_image(&record.image_id))
        })
        .collect()
}

impl PreprocessError {
    pub fn with_image(self, image_id: &str) -> HarnessError {
        let image_id = image_id.to_string();
        match self {
            PreprocessError::Segmentation(source) => HarnessError::Segmentation {
                image_id,
                source: Box::new(source),
            },
            PreprocessError::Normalization(source) => {
                HarnessError::Normalization { image_id, source }
            }
        }
    }
}
