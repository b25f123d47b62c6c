use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lbp_features, ClassifierError, FeatureConfig, FeatureVector, StripeScore};
use crate::fusion::PadLabel;
use crate::normalization::NormalizedTexture;
use crate::stripes::MicroStripe;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// RMSprop squared-gradient decay.
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Train on z-scored features; the stored model is folded back to raw features.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 25,
            early_stop_patience: 5,
            learning_rate: 0.001,
            batch_size: 16,
            rho: 0.9,
            epsilon: 1e-8,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if self.max_epochs == 0 || self.early_stop_patience == 0 || self.batch_size == 0 {
            return bad("epoch, patience and batch counts must be at least 1");
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || !self.learning_rate.is_finite()
        {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("rho must lie in [0, 1) and epsilon be positive");
        }
        Ok(())
    }
}

/// Input geometry and features the model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputConfig {
    pub stripe_height: usize,
    pub stripe_width: usize,
    pub lbp: FeatureConfig,
}

impl InputConfig {
    pub fn for_stripe(stripe_height: usize, stripe_width: usize) -> Self {
        Self {
            stripe_height,
            stripe_width,
            lbp: FeatureConfig::for_stripe(stripe_height, stripe_width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Training loss of the restored weights.
    pub final_loss: f64,
    pub best_dev_loss: f64,
    /// Every epoch that improved the development loss.
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub feature_config: InputConfig,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub training_meta: TrainingMeta,
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn mean_loss(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = dot(w, x) + b;
            // cross-entropy of logistic(z) against y
            y * softplus(-z) + (1.0 - y) * softplus(z)
        })
        .sum();
    total / xs.len() as f64
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(xs: &[&[f64]], enabled: bool) -> Self {
        let d = xs[0].len();
        if !enabled {
            return Self {
                mean: vec![0.0; d],
                scale: vec![1.0; d],
            };
        }
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) * s)
            .collect()
    }

    /// Weights and bias acting on raw features.
    fn fold(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = w.iter().zip(&self.scale).map(|(w, s)| w * s).collect();
        let shift: f64 = raw.iter().zip(&self.mean).map(|(w, m)| w * m).sum();
        (raw, b - shift)
    }
}

fn check_inputs(
    features: &[FeatureVector],
    labels: &[PadLabel],
    input: &InputConfig,
) -> Result<(), ClassifierError> {
    if features.len() != labels.len() {
        return Err(ClassifierError::LabelCount {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let expected = input.lbp.len();
    let id = input.lbp.id();
    for f in features {
        if f.config_hash != id {
            return Err(ClassifierError::FeatureConfigMismatch {
                expected: id,
                got: f.config_hash.clone(),
            });
        }
        if f.values.len() != expected {
            return Err(ClassifierError::FeatureLength {
                expected,
                got: f.values.len(),
            });
        }
    }
    Ok(())
}

/// Mini-batch logistic regression with RMSprop updates and early stopping on
/// the development loss. The best-development weights are restored. When the
/// development split is empty the training loss drives early stopping.
pub fn train(
    features: &[FeatureVector],
    labels: &[PadLabel],
    dev_features: &[FeatureVector],
    dev_labels: &[PadLabel],
    input: InputConfig,
    cfg: &TrainConfig,
) -> Result<ClassifierModel, ClassifierError> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    check_inputs(features, labels, &input)?;
    check_inputs(dev_features, dev_labels, &input)?;
    let attacks = labels.iter().filter(|&&l| l == PadLabel::Attack).count();
    if attacks == 0 || attacks == labels.len() {
        return Err(ClassifierError::SingleClass);
    }

    let raw: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let std = Standardizer::fit(&raw, cfg.standardize);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| std.apply(x)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let (dev_xs, dev_ys) = if dev_features.is_empty() {
        (None, None)
    } else {
        (
            Some(
                dev_features
                    .iter()
                    .map(|f| std.apply(&f.values))
                    .collect::<Vec<_>>(),
            ),
            Some(dev_labels.iter().map(|l| l.target()).collect::<Vec<_>>()),
        )
    };

    let d = input.lbp.len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut cache_w = vec![0.0; d];
    let mut cache_b = 0.0;
    let mut grad_w = vec![0.0; d];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best = (w.clone(), b);
    let mut best_dev = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_train = f64::INFINITY;
    let mut checkpoints = Vec::new();
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let err = logistic(dot(&w, &xs[i]) + b) - ys[i];
                for (g, x) in grad_w.iter_mut().zip(&xs[i]) {
                    *g += err * x;
                }
                grad_b += err;
            }
            let inv = 1.0 / batch.len() as f64;
            for ((wj, cj), gj) in w.iter_mut().zip(cache_w.iter_mut()).zip(&grad_w) {
                let g = gj * inv;
                *cj = cfg.rho * *cj + (1.0 - cfg.rho) * g * g;
                *wj -= cfg.learning_rate * g / (cj.sqrt() + cfg.epsilon);
            }
            let g = grad_b * inv;
            cache_b = cfg.rho * cache_b + (1.0 - cfg.rho) * g * g;
            b -= cfg.learning_rate * g / (cache_b.sqrt() + cfg.epsilon);
        }

        let train_loss = mean_loss(&w, b, &xs, &ys);
        let dev_loss = match (&dev_xs, &dev_ys) {
            (Some(dx), Some(dy)) => mean_loss(&w, b, dx, dy),
            _ => train_loss,
        };
        if !train_loss.is_finite() || !dev_loss.is_finite() {
            return Err(ClassifierError::Diverged { epoch });
        }
        if dev_loss < best_dev {
            best_dev = dev_loss;
            best_epoch = epoch;
            best_train = train_loss;
            best = (w.clone(), b);
            checkpoints.push(Checkpoint {
                epoch,
                train_loss,
                dev_loss,
            });
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let (weights, bias) = std.fold(&best.0, best.1);
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_config: input,
        weights,
        bias,
        training_meta: TrainingMeta {
            seed: cfg.seed,
            epochs_run,
            best_epoch,
            final_loss: best_train,
            best_dev_loss: best_dev,
            checkpoints,
        },
    })
}

pub fn score_features(model: &ClassifierModel, f: &FeatureVector) -> Result<f64, ClassifierError> {
    if f.values.len() != model.weights.len() {
        return Err(ClassifierError::FeatureLength {
            expected: model.weights.len(),
            got: f.values.len(),
        });
    }
    Ok(logistic(dot(&model.weights, &f.values) + model.bias))
}

/// Scores a texture patch that already has the model's input shape.
pub fn score_texture(
    model: &ClassifierModel,
    tex: &NormalizedTexture,
    stripe_offset: usize,
) -> Result<StripeScore, ClassifierError> {
    let input = &model.feature_config;
    if tex.height() != input.stripe_height || tex.width() != input.stripe_width {
        return Err(ClassifierError::StripeShape {
            height: input.stripe_height,
            width: input.stripe_width,
            got_height: tex.height(),
            got_width: tex.width(),
        });
    }
    let f = lbp_features(tex, &input.lbp)?;
    Ok(StripeScore {
        p_attack: score_features(model, &f)?,
        stripe_offset,
    })
}

pub fn score_stripe(
    model: &ClassifierModel,
    stripe: &MicroStripe,
) -> Result<StripeScore, ClassifierError> {
    score_texture(model, &stripe.texture, stripe.row_offset)
}

pub fn parse_model_json(text: &str) -> Result<ClassifierModel, ClassifierError> {
    let model: ClassifierModel =
        serde_json::from_str(text).map_err(|e| ClassifierError::Model(e.to_string()))?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::Model(format!(
            "unsupported format_version {}",
            model.format_version
        )));
    }
    let expected = model.feature_config.lbp.len();
    if model.weights.len() != expected {
        return Err(ClassifierError::FeatureLength {
            expected,
            got: model.weights.len(),
        });
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(ClassifierError::Model("non-finite parameters".into()));
    }
    Ok(model)
}

impl ClassifierModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| ClassifierError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ClassifierError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        parse_model_json(&text)
    }
}
