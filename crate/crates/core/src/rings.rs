//! Per-ring localization of PAD-relevant information.
//!
//! The extended annulus is cut into `n` concentric rings of equal radial
//! width. Each ring is unwrapped on its own, an independent classifier is
//! trained on it and its test EER recorded.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    lbp_features, score_features, train, ClassifierError, FeatureVector, InputConfig, TrainConfig,
};
use crate::fusion::PadLabel;
use crate::imaging::GrayImage;
use crate::metrics::{eer, MetricsError, ScoredSample};
use crate::normalization::{
    clahe, rubber_sheet, ClaheConfig, NormalizationError, DEFAULT_TEXTURE_WIDTH,
};
use crate::segmentation::{CircleParams, ExtendedBoundaries};

#[derive(Debug, Error)]
pub enum RingError {
    #[error("ring count must be at least 2, got {0}")]
    TooFewRings(usize),
    #[error("ring {ring}: {source}")]
    Normalization {
        ring: usize,
        #[source]
        source: NormalizationError,
    },
    #[error("ring {ring}: {source}")]
    Classifier {
        ring: usize,
        #[source]
        source: ClassifierError,
    },
    #[error("ring {ring}: {source}")]
    Metrics {
        ring: usize,
        #[source]
        source: MetricsError,
    },
    #[error("no {0} samples for ring analysis")]
    MissingSplit(&'static str),
    #[error("profile export failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub index: usize,
    pub inner: CircleParams,
    pub outer: CircleParams,
}

impl RingSpec {
    fn as_boundaries(&self, parent: &ExtendedBoundaries) -> ExtendedBoundaries {
        ExtendedBoundaries {
            inner: self.inner,
            outer: self.outer,
            s1: parent.s1,
            s2: parent.s2,
        }
    }
}

pub fn ring_boundaries(b: &ExtendedBoundaries, n: usize) -> Result<Vec<RingSpec>, RingError> {
    if n < 2 {
        return Err(RingError::TooFewRings(n));
    }
    let w = (b.outer.r - b.inner.r) / n as f64;
    let (cx, cy) = (b.inner.cx, b.inner.cy);
    Ok((0..n)
        .map(|i| RingSpec {
            index: i,
            inner: CircleParams::new(cx, cy, b.inner.r + i as f64 * w),
            outer: CircleParams::new(cx, cy, b.inner.r + (i + 1) as f64 * w),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingProfile {
    pub eers: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl RingProfile {
    pub fn from_eers(eers: Vec<f64>) -> Self {
        let min = eers.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let normalized = if max > min {
            eers.iter().map(|e| (e - min) / (max - min)).collect()
        } else {
            vec![0.0; eers.len()]
        };
        Self { eers, normalized }
    }

    /// Index of the lowest EER; the first one on ties.
    pub fn min_ring(&self) -> Option<usize> {
        self.eers
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RingError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| RingError::Io(e.to_string());
        w.write_record(["ring_index", "eer", "normalized"])
            .map_err(io)?;
        for (i, (e, n)) in self.eers.iter().zip(&self.normalized).enumerate() {
            w.write_record([i.to_string(), e.to_string(), n.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| RingError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    pub rings: usize,
    pub ring_texture_height: usize,
    pub texture_width: usize,
    pub clahe: ClaheConfig,
    pub train: TrainConfig,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            rings: 10,
            ring_texture_height: 16,
            texture_width: DEFAULT_TEXTURE_WIDTH,
            clahe: ClaheConfig {
                tiles_y: 2,
                ..ClaheConfig::default()
            },
            train: TrainConfig::default(),
        }
    }
}

/// Split membership relevant for ring analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingRole {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone)]
pub struct RingSample<'a> {
    pub image_id: &'a str,
    pub role: RingRole,
    pub truth: PadLabel,
    pub image: &'a GrayImage,
    pub boundaries: ExtendedBoundaries,
}

/// Ring seeds are derived from the base seed and the ring index.
pub fn ring_seed(base: u64, ring: usize) -> u64 {
    base ^ (ring as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn ring_features(
    s: &RingSample<'_>,
    ring: usize,
    input: &InputConfig,
    cfg: &RingConfig,
) -> Result<FeatureVector, RingError> {
    let norm = |source| RingError::Normalization { ring, source };
    let spec = ring_boundaries(&s.boundaries, cfg.rings)?[ring];
    let mut tex = rubber_sheet(
        s.image,
        &spec.as_boundaries(&s.boundaries),
        cfg.texture_width,
        cfg.ring_texture_height,
    )
    .map_err(norm)?;
    if cfg.clahe.enabled {
        tex = clahe(
            &tex,
            cfg.clahe.clip_limit,
            cfg.clahe.tiles_x,
            cfg.clahe.tiles_y,
        )
        .map_err(norm)?;
    }
    lbp_features(&tex, &input.lbp).map_err(|source| RingError::Classifier { ring, source })
}

fn ring_eer(samples: &[RingSample<'_>], ring: usize, cfg: &RingConfig) -> Result<f64, RingError> {
    let input = InputConfig::for_stripe(cfg.ring_texture_height, cfg.texture_width);
    let feats = samples
        .iter()
        .map(|s| ring_features(s, ring, &input, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let pick = |role: RingRole| {
        let (f, l): (Vec<_>, Vec<_>) = samples
            .iter()
            .zip(&feats)
            .filter(|(s, _)| s.role == role)
            .map(|(s, f)| (f.clone(), s.truth))
            .unzip();
        (f, l)
    };
    let (tf, tl) = pick(RingRole::Train);
    let (df, dl) = pick(RingRole::Dev);
    let train_cfg = TrainConfig {
        seed: ring_seed(cfg.train.seed, ring),
        ..cfg.train.clone()
    };
    let model = train(&tf, &tl, &df, &dl, input, &train_cfg)
        .map_err(|source| RingError::Classifier { ring, source })?;
    let scored = samples
        .iter()
        .zip(&feats)
        .filter(|(s, _)| s.role == RingRole::Test)
        .map(|(s, f)| {
            Ok(ScoredSample {
                image_id: s.image_id.to_string(),
                truth: s.truth,
                score: score_features(&model, f)
                    .map_err(|source| RingError::Classifier { ring, source })?,
                decision: None,
            })
        })
        .collect::<Result<Vec<_>, RingError>>()?;
    eer(&scored)
        .map(|(e, _)| e)
        .map_err(|source| RingError::Metrics { ring, source })
}

/// Trains and evaluates one classifier per ring. Rings run in parallel;
/// the result does not depend on scheduling.
pub fn per_ring_eer(
    samples: &[RingSample<'_>],
    cfg: &RingConfig,
) -> Result<RingProfile, RingError> {
    if cfg.rings < 2 {
        return Err(RingError::TooFewRings(cfg.rings));
    }
    for (role, name) in [(RingRole::Train, "train"), (RingRole::Test, "test")] {
        if !samples.iter().any(|s| s.role == role) {
            return Err(RingError::MissingSplit(name));
        }
    }
    let eers = (0..cfg.rings)
        .into_par_iter()
        .map(|ring| ring_eer(samples, ring, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RingProfile::from_eers(eers))
}
