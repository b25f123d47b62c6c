//! `msa`: command-line front end for the micro-stripe PAD toolkit.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
//! Failures print one JSON object on the last stderr line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use msa_core::classifier::{
    import_scores, lbp_features, score_texture, train, write_scores, ClassifierModel, InputConfig,
    ScoreMap, TrainConfig,
};
use msa_core::fusion::{
    majority_vote, mean_score, read_decisions, resize_baseline, write_decisions, DecisionRecord,
    FusionStrategy, PadLabel,
};
use msa_core::harness::{
    load_json_text, load_manifest, parse_experiment_config, parse_pipeline_config, preprocess,
    preprocess_records, run_experiment, synth_generate, ArtifactType, ExperimentConfig, Manifest,
    ManifestRecord, PipelineConfig, Protocol, Split, SynthParams,
};
use msa_core::imaging::{load_image, save_image};
use msa_core::metrics::{
    evaluate, operating_points, write_det, ScoredSample, DEFAULT_APCER_TARGETS,
};
use msa_core::normalization::{load_texture_dump, save_texture_dump, NormalizedTexture};
use msa_core::segmentation::{
    detect_circles, load_segmentation, write_segmentations, Segmentation,
};
use msa_core::stripes::{extract_stripes, sample_odd_stripes};

#[derive(Parser)]
#[command(
    name = "msa",
    version,
    about = "Micro-stripe iris presentation attack detection"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed overriding the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with manifest and segmentation file.
    Synth(SynthArgs),
    /// Detect pupil and iris circles in an image.
    Segment(SegmentArgs),
    /// Unwrap the extended annulus of an image into a normalized texture.
    Normalize(NormalizeArgs),
    /// Slice a texture dump into micro-stripe dumps.
    Stripes(StripesArgs),
    /// Train the reference stripe classifier on a manifest.
    Train(TrainArgs),
    /// Score every stripe of the selected manifest records.
    Score(ScoreArgs),
    /// Fuse per-stripe scores into per-image decisions.
    Fuse(FuseArgs),
    /// Compute error rates from a decision file.
    Eval(EvalArgs),
    /// Per-ring EER profile.
    Rings(RingsArgs),
    /// Run an experiment protocol.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bona_fide: Option<usize>,
    #[arg(long)]
    attack: Option<usize>,
    #[arg(long)]
    soft: Option<usize>,
    /// border_ring or dot_print.
    #[arg(long)]
    artifact: Option<String>,
    #[arg(long)]
    contrast: Option<f64>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    /// Segmentation file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    image: PathBuf,
    /// Segmentation file with one record; detected when absent.
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Output texture: `.pgm`/`.png` for an 8-bit image, otherwise a lossless dump.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StripesArgs {
    /// Texture dump.
    #[arg(long)]
    texture: PathBuf,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Odd number of stripes to sample.
    #[arg(long)]
    k: Option<usize>,
    /// Output directory for `stripe_<offset>.msat` dumps.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// train, dev or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Score CSV from `score`; not needed for resize_baseline.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// majority_vote, mean_score or resize_baseline.
    #[arg(long, default_value = "majority_vote")]
    strategy: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Model and manifest, required by resize_baseline.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    decisions: PathBuf,
    /// Manifest providing ground truth.
    #[arg(long)]
    manifest: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `threshold,apcer,bpcer` CSV to write.
    #[arg(long)]
    det: Option<PathBuf>,
}

#[derive(Args)]
struct RingsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    ring_height: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    fusion: Option<String>,
}

fn pipeline_config(g: &Global) -> Result<PipelineConfig> {
    match &g.config {
        Some(p) => Ok(parse_pipeline_config(&load_json_text(p)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn experiment_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => parse_experiment_config(&load_json_text(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn parse_arg<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T> {
    s.parse().map_err(anyhow::Error::msg)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn records_in(manifest: &Manifest, split: Split) -> Vec<ManifestRecord> {
    manifest
        .records
        .iter()
        .filter(|r| r.split == split)
        .cloned()
        .collect()
}

fn cmd_synth(g: &Global, a: &SynthArgs) -> Result<serde_json::Value> {
    let mut p: SynthParams = match &g.config {
        Some(path) => serde_json::from_str(&load_json_text(path)?).context("synth parameters")?,
        None => SynthParams::default(),
    };
    if let Some(s) = g.seed {
        p.seed = s;
    }
    if let Some(n) = a.bona_fide {
        p.bona_fide_count = n;
    }
    if let Some(n) = a.attack {
        p.attack_count = n;
    }
    if let Some(n) = a.soft {
        p.soft_lens_count = n;
    }
    if let Some(kind) = &a.artifact {
        p.artifact.kind = serde_json::from_value::<ArtifactType>(json!(kind))
            .map_err(|_| anyhow::anyhow!("unknown artifact {kind:?}"))?;
    }
    if let Some(c) = a.contrast {
        p.artifact.contrast = c;
    }
    let out = synth_generate(&p, &a.out)?;
    Ok(json!({
        "manifest": out.manifest_path,
        "segmentation": out.segmentation_path,
        "records": out.records.len(),
    }))
}

fn cmd_segment(g: &Global, a: &SegmentArgs) -> Result<serde_json::Value> {
    let cfg = pipeline_config(g)?;
    let img = load_image(&a.image)?;
    let seg = detect_circles(&img, &cfg.detector)?;
    let text = write_segmentations([&seg]);
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(json!({ "pupil": seg.pupil, "iris": seg.iris }))
}

fn segmentation_for(
    path: Option<&Path>,
    img: &msa_core::imaging::GrayImage,
    cfg: &PipelineConfig,
) -> Result<Segmentation> {
    Ok(match path {
        Some(p) => load_segmentation(p)?,
        None => detect_circles(img, &cfg.detector)?,
    })
}

fn cmd_normalize(g: &Global, a: &NormalizeArgs) -> Result<serde_json::Value> {
    let cfg = pipeline_config(g)?;
    let img = load_image(&a.image)?;
    let seg = segmentation_for(a.segmentation.as_deref(), &img, &cfg)?;
    let (b, tex) = preprocess(&img, &seg, &cfg)?;
    save_texture(&tex, &a.out)?;
    Ok(json!({ "inner": b.inner, "outer": b.outer, "width": tex.width(), "height": tex.height() }))
}

fn save_texture(tex: &NormalizedTexture, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if matches!(ext, "pgm" | "png") {
        save_image(&tex.to_gray_image(), path)?;
    } else {
        save_texture_dump(tex, path)?;
    }
    Ok(())
}

fn cmd_stripes(g: &Global, a: &StripesArgs) -> Result<serde_json::Value> {
    let cfg = pipeline_config(g)?;
    let tex = load_texture_dump(&a.texture)?;
    let height = a.height.unwrap_or(cfg.stripes.height);
    let stride = a.stride.unwrap_or(cfg.stripes.stride);
    let id = a
        .texture
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("texture");
    let mut set = extract_stripes(&tex, id, height, stride)?;
    if let Some(k) = a.k.or(cfg.stripes.sample_k) {
        set = sample_odd_stripes(&set, k, g.seed.unwrap_or(cfg.train.seed))?;
    }
    fs::create_dir_all(&a.out)?;
    for s in &set.stripes {
        save_texture_dump(
            &s.texture,
            a.out.join(format!("stripe_{:03}.msat", s.row_offset)),
        )?;
    }
    let offsets: Vec<usize> = set.stripes.iter().map(|s| s.row_offset).collect();
    Ok(json!({ "count": set.len(), "offsets": offsets }))
}

fn cmd_train(g: &Global, a: &TrainArgs) -> Result<serde_json::Value> {
    let cfg = pipeline_config(g)?;
    let manifest = load_manifest(&a.manifest)?;
    let height = a.height.unwrap_or(cfg.stripes.height);
    let stride = a.stride.unwrap_or(cfg.stripes.stride);
    let input = InputConfig::for_stripe(height, cfg.texture_width);
    let features = |split: Split| -> Result<(Vec<_>, Vec<_>)> {
        let recs = records_in(&manifest, split);
        let textures = preprocess_records(&manifest, &recs, &cfg)?;
        let mut f = Vec::new();
        let mut l = Vec::new();
        for (r, tex) in recs.iter().zip(&textures) {
            for s in extract_stripes(tex, &r.image_id, height, stride)?.stripes {
                f.push(lbp_features(&s.texture, &input.lbp)?);
                l.push(r.truth);
            }
        }
        Ok((f, l))
    };
    let (tf, tl) = features(Split::Train)?;
    let (df, dl) = features(Split::Dev)?;
    let tcfg = TrainConfig {
        seed: g.seed.unwrap_or(cfg.train.seed),
        ..cfg.train.clone()
    };
    let model = train(&tf, &tl, &df, &dl, input, &tcfg)?;
    write_file(&a.out, model.to_json())?;
    Ok(json!({
        "model": a.out,
        "train_stripes": tf.len(),
        "dev_stripes": df.len(),
        "best_epoch": model.training_meta.best_epoch,
        "epochs_run": model.training_meta.epochs_run,
    }))
}

fn cmd_score(g: &Global, a: &ScoreArgs) -> Result<serde_json::Value> {
    let cfg = pipeline_config(g)?;
    let model = ClassifierModel::load(&a.model)?;
    let manifest = load_manifest(&a.manifest)?;
    let recs = records_in(&manifest, parse_arg(&a.split)?);
    let textures = preprocess_records(&manifest, &recs, &cfg)?;
    let height = model.feature_config.stripe_height;
    let mut scores = ScoreMap::new();
    for (r, tex) in recs.iter().zip(&textures) {
        for s in extract_stripes(tex, &r.image_id, height, cfg.stripes.stride)?.stripes {
            let sc = score_texture(&model, &s.texture, s.row_offset)?;
            scores.insert((r.image_id.clone(), s.row_offset), sc);
        }
    }
    let mut buf = Vec::new();
    write_scores(&mut buf, &scores)?;
    write_file(&a.out, buf)?;
    Ok(json!({ "images": recs.len(), "stripes": scores.len() }))
}

fn cmd_fuse(g: &Global, a: &FuseArgs) -> Result<serde_json::Value> {
    let strategy: FusionStrategy = parse_arg(&a.strategy)?;
    let mut records = Vec::new();
    if strategy == FusionStrategy::ResizeBaseline {
        let (Some(model), Some(manifest)) = (&a.model, &a.manifest) else {
            bail!("resize_baseline needs --model and --manifest");
        };
        let cfg = pipeline_config(g)?;
        let model = ClassifierModel::load(model)?;
        let manifest = load_manifest(manifest)?;
        let recs = records_in(&manifest, parse_arg(&a.split)?);
        let textures = preprocess_records(&manifest, &recs, &cfg)?;
        for (r, tex) in recs.iter().zip(&textures) {
            let d = resize_baseline(tex, &model, model.feature_config.stripe_height)?;
            records.push(DecisionRecord {
                image_id: r.image_id.clone(),
                strategy,
                fused_score: d.fused_score,
                label: d.label,
            });
        }
    } else {
        let Some(path) = &a.scores else {
            bail!("{} needs --scores", strategy.as_str());
        };
        let scores = import_scores(path)?;
        let mut per_image: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for ((id, _), s) in &scores {
            per_image.entry(id.as_str()).or_default().push(*s);
        }
        for (id, stripes) in per_image {
            let d = match strategy {
                FusionStrategy::MajorityVote => majority_vote(&stripes, a.threshold),
                _ => mean_score(&stripes, a.threshold),
            }
            .with_context(|| format!("image {id}"))?;
            records.push(DecisionRecord {
                image_id: id.to_string(),
                strategy,
                fused_score: d.fused_score,
                label: d.label,
            });
        }
    }
    let mut buf = Vec::new();
    write_decisions(&mut buf, &records)?;
    write_file(&a.out, buf)?;
    let attacks = records
        .iter()
        .filter(|r| r.label == PadLabel::Attack)
        .count();
    Ok(json!({ "images": records.len(), "attack_decisions": attacks }))
}

fn cmd_eval(_g: &Global, a: &EvalArgs) -> Result<serde_json::Value> {
    let manifest = load_manifest(&a.manifest)?;
    let truth: BTreeMap<&str, PadLabel> = manifest
        .records
        .iter()
        .map(|r| (r.image_id.as_str(), r.truth))
        .collect();
    let file = fs::File::open(&a.decisions)
        .with_context(|| format!("opening {}", a.decisions.display()))?;
    let decisions = read_decisions(file)?;
    let samples = decisions
        .iter()
        .map(|d| {
            let t = truth
                .get(d.image_id.as_str())
                .with_context(|| format!("image {} not in manifest", d.image_id))?;
            Ok(ScoredSample {
                image_id: d.image_id.clone(),
                truth: *t,
                score: d.fused_score,
                decision: Some(d.label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&samples, &DEFAULT_APCER_TARGETS)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.out {
        write_file(p, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(p) = &a.det {
        let mut buf = Vec::new();
        write_det(&operating_points(&samples)?, &mut buf)?;
        write_file(p, buf)?;
    }
    Ok(serde_json::to_value(&report)?)
}

fn cmd_rings(g: &Global, a: &RingsArgs) -> Result<serde_json::Value> {
    let mut cfg = experiment_config(g)?;
    cfg.protocol = Protocol::RingAnalysis;
    if g.config.is_none() {
        cfg.repeat_count = 1;
    }
    if let Some(n) = a.n {
        cfg.rings.rings = n;
    }
    if let Some(h) = a.ring_height {
        cfg.rings.ring_texture_height = h;
    }
    if let Some(r) = a.repeats {
        cfg.repeat_count = r;
    }
    let report = run_experiment(&cfg, &a.manifest, Some(&a.out))?;
    let profile = report
        .mean_ring_profile
        .clone()
        .expect("ring protocol yields a profile");
    Ok(json!({ "profile": a.out.join("ring_profile.csv"), "eers": profile.eers }))
}

fn cmd_experiment(g: &Global, a: &ExperimentArgs) -> Result<serde_json::Value> {
    let mut cfg = experiment_config(g)?;
    if let Some(p) = &a.protocol {
        cfg.protocol = parse_arg(p)?;
    }
    if let Some(r) = a.repeats {
        cfg.repeat_count = r;
    }
    if let Some(f) = &a.fusion {
        cfg.fusion = parse_arg(f)?;
    }
    let report = run_experiment(&cfg, &a.manifest, Some(&a.out))?;
    let summary: BTreeMap<&str, f64> = report
        .variants
        .iter()
        .map(|v| (v.name.as_str(), v.mean.hter))
        .collect();
    Ok(json!({ "report": a.out.join("report.json"), "mean_hter": summary }))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => cmd_synth(g, a),
        Command::Segment(a) => cmd_segment(g, a),
        Command::Normalize(a) => cmd_normalize(g, a),
        Command::Stripes(a) => cmd_stripes(g, a),
        Command::Train(a) => cmd_train(g, a),
        Command::Score(a) => cmd_score(g, a),
        Command::Fuse(a) => cmd_fuse(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Rings(a) => cmd_rings(g, a),
        Command::Experiment(a) => cmd_experiment(g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e.render());
            let line =
                json!({ "status": "error", "kind": "usage", "message": e.kind().to_string() });
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            let ok = json!({ "status": "ok", "result": summary });
            eprintln!("{ok}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = json!({ "status": "error", "kind": "runtime", "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
