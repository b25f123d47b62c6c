//! Experiment protocols over a manifest.
//!
//! Images are preprocessed once per run and shared by all repeats. Repeat
//! `i` trains a fresh model with seed `base_seed + i`; its artifacts go to
//! `repeat_{i}/` under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Protocol};
use super::manifest::{parse_manifest, LensType, Manifest, ManifestRecord, Split};
use super::{load_record_image, preprocess, HarnessError, SegmentationCache};
use crate::classifier::{
    lbp_features, score_features, train, ClassifierModel, FeatureVector, InputConfig, StripeScore,
    TrainConfig,
};
use crate::fusion::{
    majority_vote, mean_score, resize_baseline, write_decisions, DecisionRecord, FusionStrategy,
    PadDecision, PadLabel, STRIPE_THRESHOLD,
};
use crate::imaging::GrayImage;
use crate::metrics::{evaluate, EvalReport, ScoredSample, DEFAULT_APCER_TARGETS};
use crate::normalization::NormalizedTexture;
use crate::rings::{per_ring_eer, RingConfig, RingProfile, RingRole, RingSample};
use crate::segmentation::ExtendedBoundaries;
use crate::stripes::{extract_stripes, sample_odd_stripes};

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub name: String,
    pub mean: EvalReport,
    pub repeats: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit: String,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub repeat_seeds: Vec<u64>,
    pub manifest_sha256: String,
    pub records_used: usize,
    /// True when the manifest had no dev split and one was carved from train.
    pub dev_carved_from_train: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub protocol: Protocol,
    pub variants: Vec<VariantOutcome>,
    pub ring_profiles: Vec<RingProfile>,
    pub mean_ring_profile: Option<RingProfile>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn variant(&self, name: &str) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Prepared {
    record: ManifestRecord,
    split: Split,
    image: Option<GrayImage>,
    boundaries: ExtendedBoundaries,
    texture: NormalizedTexture,
}

fn protocol_error(p: Protocol, reason: impl Into<String>) -> HarnessError {
    HarnessError::Protocol {
        protocol: p.as_str(),
        reason: reason.into(),
    }
}

/// Record inclusion per protocol. Labels are never changed.
fn select_records(
    p: Protocol,
    records: &[ManifestRecord],
) -> Result<Vec<ManifestRecord>, HarnessError> {
    let soft = |r: &&ManifestRecord| r.lens_type == LensType::Soft;
    let soft_in = |split: Split| records.iter().filter(soft).any(|r| r.split == split);
    let selected: Vec<ManifestRecord> = match p {
        Protocol::SoftLens1 => {
            if !(soft_in(Split::Train) || soft_in(Split::Dev)) || !soft_in(Split::Test) {
                return Err(protocol_error(
                    p,
                    "needs soft-lens records in training and test splits",
                ));
            }
            records.to_vec()
        }
        Protocol::SoftLens2 => {
            if !soft_in(Split::Test) {
                return Err(protocol_error(
                    p,
                    "needs soft-lens records in the test split",
                ));
            }
            records
                .iter()
                .filter(|r| r.lens_type != LensType::Soft || r.split == Split::Test)
                .cloned()
                .collect()
        }
        Protocol::SoftLens3 => {
            if !records.iter().any(|r| r.lens_type == LensType::Soft) {
                return Err(protocol_error(p, "manifest has no soft-lens records"));
            }
            records
                .iter()
                .filter(|r| r.lens_type != LensType::Soft)
                .cloned()
                .collect()
        }
        _ => records.to_vec(),
    };
    for split in [Split::Train, Split::Test] {
        for label in [PadLabel::BonaFide, PadLabel::Attack] {
            if !selected
                .iter()
                .any(|r| r.split == split && r.truth == label)
            {
                return Err(protocol_error(
                    p,
                    format!("{} split has no {label} records", split.as_str()),
                ));
            }
        }
    }
    Ok(selected)
}

/// Moves a stratified quarter of train to dev when no dev split exists.
fn effective_splits(records: &[ManifestRecord], seed: u64) -> (Vec<Split>, bool) {
    let mut splits: Vec<Split> = records.iter().map(|r| r.split).collect();
    if splits.contains(&Split::Dev) {
        return (splits, false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut groups: Vec<(PadLabel, LensType)> =
        records.iter().map(|r| (r.truth, r.lens_type)).collect();
    groups.sort();
    groups.dedup();
    for g in groups {
        let mut idx: Vec<usize> = (0..records.len())
            .filter(|&i| splits[i] == Split::Train && (records[i].truth, records[i].lens_type) == g)
            .collect();
        idx.shuffle(&mut rng);
        let n_dev = (idx.len() as f64 * 0.25).round() as usize;
        for &i in &idx[..n_dev.min(idx.len().saturating_sub(1))] {
            splits[i] = Split::Dev;
        }
    }
    (splits, true)
}

fn prepare(
    cfg: &ExperimentConfig,
    manifest: &Manifest,
    records: Vec<ManifestRecord>,
    splits: Vec<Split>,
) -> Result<Vec<Prepared>, HarnessError> {
    let cache = SegmentationCache::load(manifest, &records)?;
    let keep_image = cfg.protocol == Protocol::RingAnalysis;
    records
        .into_par_iter()
        .zip(splits)
        .map(|(record, split)| {
            let img = load_record_image(manifest, &record)?;
            let seg = cache.resolve(manifest, &record, &img, &cfg.pipeline)?;
            let (boundaries, texture) = preprocess(&img, &seg, &cfg.pipeline)
                .map_err(|e| e.with_image(&record.image_id))?;
            Ok(Prepared {
                record,
                split,
                image: keep_image.then_some(img),
                boundaries,
                texture,
            })
        })
        .collect()
}

/// Stripe features of every image at one stripe height.
fn stripe_features(
    items: &[Prepared],
    height: usize,
    stride: usize,
) -> Result<Vec<Vec<FeatureVector>>, HarnessError> {
    items
        .par_iter()
        .map(|p| {
            let set = extract_stripes(&p.texture, &p.record.image_id, height, stride)?;
            let input = InputConfig::for_stripe(height, p.texture.width());
            set.stripes
                .iter()
                .map(|s| lbp_features(&s.texture, &input.lbp).map_err(HarnessError::from))
                .collect()
        })
        .collect()
}

fn train_split(
    items: &[Prepared],
    feats: &[Vec<FeatureVector>],
    split: Split,
) -> (Vec<FeatureVector>, Vec<PadLabel>) {
    let mut f = Vec::new();
    let mut l = Vec::new();
    for (p, fs) in items.iter().zip(feats) {
        if p.split == split {
            f.extend(fs.iter().cloned());
            l.extend(std::iter::repeat_n(p.record.truth, fs.len()));
        }
    }
    (f, l)
}

struct RepeatModel<'a> {
    model: ClassifierModel,
    height: usize,
    feats: &'a [Vec<FeatureVector>],
}

fn train_model<'a>(
    cfg: &ExperimentConfig,
    items: &[Prepared],
    feats: &'a [Vec<FeatureVector>],
    height: usize,
    seed: u64,
) -> Result<RepeatModel<'a>, HarnessError> {
    let (tf, tl) = train_split(items, feats, Split::Train);
    let (df, dl) = train_split(items, feats, Split::Dev);
    let tcfg = TrainConfig {
        seed,
        ..cfg.pipeline.train.clone()
    };
    let input = InputConfig::for_stripe(height, cfg.pipeline.texture_width);
    let model = train(&tf, &tl, &df, &dl, input, &tcfg)?;
    Ok(RepeatModel {
        model,
        height,
        feats,
    })
}

/// Mixes the repeat seed with the image position for stripe sampling.
fn image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn decide(
    cfg: &ExperimentConfig,
    rm: &RepeatModel<'_>,
    item: &Prepared,
    index: usize,
    strategy: FusionStrategy,
    seed: u64,
) -> Result<PadDecision, HarnessError> {
    if strategy == FusionStrategy::ResizeBaseline {
        return Ok(resize_baseline(&item.texture, &rm.model, rm.height)?);
    }
    let stride = cfg.pipeline.stripes.stride;
    let offsets: Vec<usize> = match cfg.pipeline.stripes.sample_k {
        Some(k) => {
            let set = extract_stripes(&item.texture, &item.record.image_id, rm.height, stride)?;
            sample_odd_stripes(&set, k, image_seed(seed, index))?
                .stripes
                .iter()
                .map(|s| s.row_offset / stride)
                .collect()
        }
        None => (0..rm.feats[index].len()).collect(),
    };
    let scores = offsets
        .iter()
        .map(|&i| {
            Ok(StripeScore {
                p_attack: score_features(&rm.model, &rm.feats[index][i])?,
                stripe_offset: i * stride,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(match strategy {
        FusionStrategy::MajorityVote => majority_vote(&scores, STRIPE_THRESHOLD)?,
        _ => mean_score(&scores, STRIPE_THRESHOLD)?,
    })
}

fn evaluate_variant(
    cfg: &ExperimentConfig,
    items: &[Prepared],
    rm: &RepeatModel<'_>,
    strategy: FusionStrategy,
    seed: u64,
) -> Result<(EvalReport, Vec<DecisionRecord>), HarnessError> {
    let test: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].split == Split::Test)
        .collect();
    let decisions = test
        .par_iter()
        .map(|&i| decide(cfg, rm, &items[i], i, strategy, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut samples = Vec::with_capacity(test.len());
    let mut records = Vec::with_capacity(test.len());
    for (&i, d) in test.iter().zip(&decisions) {
        let id = &items[i].record.image_id;
        samples.push(ScoredSample {
            image_id: id.clone(),
            truth: items[i].record.truth,
            score: d.fused_score,
            decision: Some(d.label),
        });
        records.push(DecisionRecord {
            image_id: id.clone(),
            strategy,
            fused_score: d.fused_score,
            label: d.label,
        });
    }
    Ok((evaluate(&samples, &DEFAULT_APCER_TARGETS)?, records))
}

struct Writer {
    root: Option<PathBuf>,
}

impl Writer {
    fn repeat_dir(&self, i: usize) -> Result<Option<PathBuf>, HarnessError> {
        let Some(root) = &self.root else {
            return Ok(None);
        };
        let dir = root.join(format!("repeat_{i}"));
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        Ok(Some(dir))
    }

    fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
        fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
    }

    fn repeat_artifacts(
        dir: &Option<PathBuf>,
        suffix: &str,
        model: Option<&ClassifierModel>,
        report: &EvalReport,
        decisions: &[DecisionRecord],
    ) -> Result<(), HarnessError> {
        let Some(dir) = dir else { return Ok(()) };
        if let Some(m) = model {
            Self::write(
                &dir.join(format!("model{suffix}.json")),
                m.to_json().as_bytes(),
            )?;
        }
        let report_json = serde_json::to_string_pretty(report).expect("report serializes");
        Self::write(
            &dir.join(format!("report{suffix}.json")),
            report_json.as_bytes(),
        )?;
        let mut buf = Vec::new();
        write_decisions(&mut buf, decisions)?;
        Self::write(&dir.join(format!("decisions{suffix}.csv")), &buf)
    }
}

fn mean_variant(name: String, repeats: Vec<EvalReport>) -> Result<VariantOutcome, HarnessError> {
    Ok(VariantOutcome {
        name,
        mean: EvalReport::mean(&repeats)?,
        repeats,
    })
}

fn run_stripe_protocol(
    cfg: &ExperimentConfig,
    items: &[Prepared],
    out: &Writer,
) -> Result<Vec<VariantOutcome>, HarnessError> {
    let stride = cfg.pipeline.stripes.stride;
    let seeds = cfg.repeat_seeds();
    match cfg.protocol {
        Protocol::StripeAblation => {
            let mut variants = Vec::new();
            for &h in &cfg.ablation_heights {
                let feats = stripe_features(items, h, stride)?;
                let mut reports = Vec::new();
                for (i, &seed) in seeds.iter().enumerate() {
                    let rm = train_model(cfg, items, &feats, h, seed)?;
                    let (report, decisions) = evaluate_variant(cfg, items, &rm, cfg.fusion, seed)?;
                    let dir = out.repeat_dir(i)?;
                    Writer::repeat_artifacts(
                        &dir,
                        &format!("_h{h}"),
                        Some(&rm.model),
                        &report,
                        &decisions,
                    )?;
                    reports.push(report);
                }
                variants.push(mean_variant(format!("h{h}"), reports)?);
            }
            Ok(variants)
        }
        Protocol::FusionCompare => {
            let h = cfg.pipeline.stripes.height;
            let feats = stripe_features(items, h, stride)?;
            let strategies = [
                FusionStrategy::MajorityVote,
                FusionStrategy::MeanScore,
                FusionStrategy::ResizeBaseline,
            ];
            let mut reports: Vec<Vec<EvalReport>> = vec![Vec::new(); strategies.len()];
            for (i, &seed) in seeds.iter().enumerate() {
                let rm = train_model(cfg, items, &feats, h, seed)?;
                let dir = out.repeat_dir(i)?;
                if let Some(d) = &dir {
                    Writer::write(&d.join("model.json"), rm.model.to_json().as_bytes())?;
                }
                for (slot, &s) in reports.iter_mut().zip(&strategies) {
                    let (report, decisions) = evaluate_variant(cfg, items, &rm, s, seed)?;
                    Writer::repeat_artifacts(
                        &dir,
                        &format!("_{}", s.as_str()),
                        None,
                        &report,
                        &decisions,
                    )?;
                    slot.push(report);
                }
            }
            strategies
                .iter()
                .zip(reports)
                .map(|(s, r)| mean_variant(s.as_str().to_string(), r))
                .collect()
        }
        _ => {
            let h = cfg.pipeline.stripes.height;
            let feats = stripe_features(items, h, stride)?;
            let mut reports = Vec::new();
            for (i, &seed) in seeds.iter().enumerate() {
                let rm = train_model(cfg, items, &feats, h, seed)?;
                let (report, decisions) = evaluate_variant(cfg, items, &rm, cfg.fusion, seed)?;
                let dir = out.repeat_dir(i)?;
                Writer::repeat_artifacts(&dir, "", Some(&rm.model), &report, &decisions)?;
                reports.push(report);
            }
            Ok(vec![mean_variant(
                cfg.fusion.as_str().to_string(),
                reports,
            )?])
        }
    }
}

fn run_rings(
    cfg: &ExperimentConfig,
    items: &[Prepared],
    out: &Writer,
) -> Result<Vec<RingProfile>, HarnessError> {
    let samples: Vec<RingSample<'_>> = items
        .iter()
        .map(|p| RingSample {
            image_id: &p.record.image_id,
            role: match p.split {
                Split::Train => RingRole::Train,
                Split::Dev => RingRole::Dev,
                Split::Test => RingRole::Test,
            },
            truth: p.record.truth,
            image: p.image.as_ref().expect("images kept for ring analysis"),
            boundaries: p.boundaries,
        })
        .collect();
    let mut profiles = Vec::new();
    for (i, seed) in cfg.repeat_seeds().into_iter().enumerate() {
        let rcfg = RingConfig {
            train: TrainConfig {
                seed,
                ..cfg.rings.train.clone()
            },
            ..cfg.rings.clone()
        };
        let profile = per_ring_eer(&samples, &rcfg)?;
        if let Some(dir) = out.repeat_dir(i)? {
            let mut buf = Vec::new();
            profile.write_csv(&mut buf)?;
            Writer::write(&dir.join("ring_profile.csv"), &buf)?;
        }
        profiles.push(profile);
    }
    Ok(profiles)
}

fn mean_profile(profiles: &[RingProfile]) -> Option<RingProfile> {
    let first = profiles.first()?;
    let n = profiles.len() as f64;
    let eers = (0..first.eers.len())
        .map(|r| profiles.iter().map(|p| p.eers[r]).sum::<f64>() / n)
        .collect();
    Some(RingProfile::from_eers(eers))
}

/// Runs `cfg` on the manifest at `manifest_path`. When `out_dir` is given,
/// per-repeat models, decisions and reports plus `report.json` and
/// `summary.txt` are written there.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    manifest_path: &Path,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let bytes = fs::read(manifest_path).map_err(|e| HarnessError::io(manifest_path, e))?;
    let manifest = Manifest {
        base_dir: manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
        records: parse_manifest(bytes.as_slice())?,
    };
    let selected = select_records(cfg.protocol, &manifest.records)?;
    let (splits, carved) = effective_splits(&selected, cfg.base_seed);
    let records_used = selected.len();
    let items = prepare(cfg, &manifest, selected, splits)?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let writer = Writer {
        root: out_dir.map(Path::to_path_buf),
    };
    let (variants, ring_profiles) = if cfg.protocol == Protocol::RingAnalysis {
        (Vec::new(), run_rings(cfg, &items, &writer)?)
    } else {
        (run_stripe_protocol(cfg, &items, &writer)?, Vec::new())
    };
    let report = ExperimentReport {
        format_version: EXPERIMENT_FORMAT_VERSION,
        protocol: cfg.protocol,
        variants,
        mean_ring_profile: mean_profile(&ring_profiles),
        ring_profiles,
        provenance: Provenance {
            toolkit: env!("CARGO_PKG_NAME").to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            repeat_seeds: cfg.repeat_seeds(),
            manifest_sha256: sha256_hex(&bytes),
            records_used,
            dev_carved_from_train: carved,
        },
    };
    if let Some(dir) = out_dir {
        Writer::write(&dir.join("report.json"), report.to_json().as_bytes())?;
        let mut summary = String::new();
        for v in &report.variants {
            summary.push_str(&format!(
                "[{}] mean over {} repeats\n",
                v.name,
                v.repeats.len()
            ));
            summary.push_str(&v.mean.to_table());
            summary.push('\n');
        }
        if let Some(p) = &report.mean_ring_profile {
            let mut buf = Vec::new();
            p.write_csv(&mut buf)?;
            Writer::write(&dir.join("ring_profile.csv"), &buf)?;
            summary.push_str(&String::from_utf8_lossy(&buf));
        }
        Writer::write(&dir.join("summary.txt"), summary.as_bytes())?;
    }
    Ok(report)
}
