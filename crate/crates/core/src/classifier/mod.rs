//! Per-stripe attack scoring: a uniform-LBP + logistic-regression reference
//! classifier, and ingestion of scores produced by external models.

mod lbp;
mod model;
mod scores;

pub use lbp::{lbp_code, lbp_features, uniform_bin, FeatureConfig, FeatureVector, UNIFORM_BINS};
pub use model::{
    logistic, parse_model_json, score_features, score_stripe, score_texture, train, Checkpoint,
    ClassifierModel, InputConfig, TrainConfig, TrainingMeta, MODEL_FORMAT_VERSION,
};
pub use scores::{import_scores, parse_scores, write_scores, ScoreKey, ScoreMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{cells_x}x{cells_y} cell grid too fine for a {width}x{height} stripe (cells need 3x3 pixels)")]
    GridTooFine {
        width: usize,
        height: usize,
        cells_x: usize,
        cells_y: usize,
    },
    #[error("feature length {got} does not match the model ({expected})")]
    FeatureLength { expected: usize, got: usize },
    #[error("stripe of {got_height}x{got_width} does not match model input {height}x{width}")]
    StripeShape {
        height: usize,
        width: usize,
        got_height: usize,
        got_width: usize,
    },
    #[error("feature configuration {got} does not match {expected}")]
    FeatureConfigMismatch { expected: String, got: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("{features} feature vectors but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("model file: {0}")]
    Model(String),
    #[error("texture: {0}")]
    Texture(String),
    #[error("score csv line {line}: {message}")]
    ScoreParse { line: u64, message: String },
    #[error("score csv line {line}: p_attack {value} outside [0, 1]")]
    ScoreRange { line: u64, value: f64 },
    #[error("score csv line {line}: duplicate entry for ({image_id}, {stripe_offset})")]
    DuplicateScore {
        line: u64,
        image_id: String,
        stripe_offset: usize,
    },
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeScore {
    pub p_attack: f64,
    pub stripe_offset: usize,
}
