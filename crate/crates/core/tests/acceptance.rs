//! Acceptance suite. Run with `cargo test -p msa-core --test acceptance`.
//! Prints one line per criterion and exits nonzero when any fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::{
    bpcer_oracle, eer_oracle, noiseless_params, random_samples, rng, rotate_segmentation,
    step_image,
};
use msa_core::fusion::PadLabel;
use msa_core::harness::{
    eye_specs, render_eye, run_experiment, synth_generate, ExperimentConfig, ExperimentReport,
    Protocol, SynthParams,
};
use msa_core::metrics::{bpcer_at_apcer, eer, rates_at_decisions, round2, ScoredSample};
use msa_core::normalization::{rubber_sheet, NormalizedTexture};
use msa_core::segmentation::{
    extend_boundaries, CircleParams, ExtendedBoundaries, Segmentation, DEFAULT_S1, DEFAULT_S2,
};
use msa_core::stripes::extract_stripes;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Decisions that realise `missed` of `attacks` and `rejected` of `bona` errors.
fn confusion(attacks: usize, missed: usize, bona: usize, rejected: usize) -> Vec<ScoredSample> {
    let mk = |i: usize, truth, decision| ScoredSample {
        image_id: format!("x{i}"),
        truth,
        score: 0.5,
        decision: Some(decision),
    };
    let mut v = Vec::new();
    for i in 0..attacks {
        let d = if i < missed {
            PadLabel::BonaFide
        } else {
            PadLabel::Attack
        };
        v.push(mk(i, PadLabel::Attack, d));
    }
    for i in 0..bona {
        let d = if i < rejected {
            PadLabel::Attack
        } else {
            PadLabel::BonaFide
        };
        v.push(mk(attacks + i, PadLabel::BonaFide, d));
    }
    v
}

fn metric_arithmetic() -> Outcome {
    let rows = [
        ((303, 7, 356, 71), (2.31, 19.94, 11.13)),
        ((1100, 2, 900, 0), (0.18, 0.00, 0.09)),
    ];
    let mut detail = Vec::new();
    for ((a, m, b, r), (apcer, bpcer, hter)) in rows {
        let rates = rates_at_decisions(&confusion(a, m, b, r)).map_err(|e| e.to_string())?;
        let got = (round2(rates.apcer), round2(rates.bpcer), round2(rates.hter));
        detail.push(format!("({:.2}, {:.2}) -> {:.2}", got.0, got.1, got.2));
        if got != (apcer, bpcer, hter) {
            return Err(detail.join("; "));
        }
    }
    Ok(detail.join("; "))
}

fn stripe_combinatorics() -> Outcome {
    let tex = NormalizedTexture::new(512, 64, vec![0.0; 512 * 64]).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (h, want) in [(32, 9), (24, 11), (48, 5), (64, 1)] {
        let n = extract_stripes(&tex, "t", h, 4)
            .map_err(|e| e.to_string())?
            .len();
        detail.push(format!("h{h}:{n}"));
        if n != want {
            return Err(detail.join(" "));
        }
    }
    Ok(detail.join(" "))
}

fn concentric(rp: f64, ri: f64) -> Segmentation {
    Segmentation::new(
        CircleParams::new(0.0, 0.0, rp),
        CircleParams::new(0.0, 0.0, ri),
    )
    .expect("valid segmentation")
}

fn extension_properties() -> Outcome {
    let b = extend_boundaries(&concentric(30.0, 80.0), 2.0 / 5.0, 2.0 / 5.0)
        .map_err(|e| e.to_string())?;
    if (b.inner.r, b.outer.r) != (60.0, 100.0) {
        return Err(format!(
            "worked example gave ({}, {})",
            b.inner.r, b.outer.r
        ));
    }
    let mut r = rng(0xE1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let rp = r.random_range(2.0..80.0);
        let ri = rp + r.random_range(2.0..150.0);
        let k = r.random_range(0.05..20.0);
        let base = extend_boundaries(&concentric(rp, ri), DEFAULT_S1, DEFAULT_S2)
            .map_err(|e| e.to_string())?;
        let scaled = extend_boundaries(&concentric(k * rp, k * ri), DEFAULT_S1, DEFAULT_S2)
            .map_err(|e| e.to_string())?;
        for (s, b) in [
            (scaled.inner.r, base.inner.r),
            (scaled.outer.r, base.outer.r),
        ] {
            worst = worst.max((s - k * b).abs() / (k * b).abs());
        }
    }
    check(
        worst <= 1e-9,
        format!("(30, 80) -> (60, 100); max relative error {worst:.2e} over 1000 triples"),
    )
}

fn rubber_sheet_geometry() -> Outcome {
    let (cx, cy) = (128.3, 127.6);
    let b = ExtendedBoundaries {
        inner: CircleParams::new(cx, cy, 20.0),
        outer: CircleParams::new(cx, cy, 120.0),
        s1: DEFAULT_S1,
        s2: DEFAULT_S2,
    };
    let tex =
        rubber_sheet(&step_image(256, cx, cy, 70.0), &b, 512, 64).map_err(|e| e.to_string())?;
    for c in 0..512 {
        let col: Vec<f32> = (0..64).map(|r| tex.get(c, r)).collect();
        let jumps: Vec<f32> = col.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let max = jumps.iter().copied().fold(0.0, f32::max);
        if jumps.iter().position(|&j| j == max) != Some(31) || jumps[32..].contains(&max) {
            return Err(format!("column {c}: step not between rows 31 and 32"));
        }
    }

    let mut p = noiseless_params(0xA4);
    p.bona_fide_count = 12;
    p.attack_count = 12;
    let specs = eye_specs(&p);
    let mut worst: f64 = 0.0;
    for (i, spec) in specs.iter().enumerate() {
        let k = 5 + 23 * (i % 11);
        let angle = 2.0 * PI * k as f64 / 512.0;
        let ba = extend_boundaries(&spec.segmentation, DEFAULT_S1, DEFAULT_S2)
            .map_err(|e| e.to_string())?;
        let bb = extend_boundaries(
            &rotate_segmentation(&spec.segmentation, angle),
            DEFAULT_S1,
            DEFAULT_S2,
        )
        .map_err(|e| e.to_string())?;
        let ta =
            rubber_sheet(&render_eye(spec, &p, 0.0), &ba, 512, 64).map_err(|e| e.to_string())?;
        let tb =
            rubber_sheet(&render_eye(spec, &p, angle), &bb, 512, 64).map_err(|e| e.to_string())?;
        let mut sum = 0.0;
        for r in 0..64 {
            for c in 0..512 {
                sum += (ta.get(c, r) - tb.get((c + k) % 512, r)).abs() as f64;
            }
        }
        worst = worst.max(sum / (512.0 * 64.0));
    }
    check(
        worst <= 2.0,
        format!(
            "step at rows 31-32 in 512 columns; rotation MAD max {worst:.3} over {} images",
            specs.len()
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0x05);
    let sets = 250;
    for i in 0..sets {
        let n = r.random_range(10..=50);
        let s = random_samples(&mut r, n);
        let got = eer(&s).map_err(|e| e.to_string())?;
        if got != eer_oracle(&s) {
            return Err(format!(
                "set {i}: eer {got:?} vs oracle {:?}",
                eer_oracle(&s)
            ));
        }
        for t in [0.1, 1.0, 5.0, 10.0, 20.0] {
            let b = bpcer_at_apcer(&s, t).map_err(|e| e.to_string())?;
            if b != bpcer_oracle(&s, t) {
                return Err(format!(
                    "set {i}: bpcer@{t} {b} vs oracle {}",
                    bpcer_oracle(&s, t)
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, format!("{sets} sets exact, {secs:.2} s"))
}

struct Datasets {
    _root: tempfile::TempDir,
    border: PathBuf,
    null: PathBuf,
    soft: PathBuf,
}

fn datasets() -> Datasets {
    let root = tempfile::tempdir().expect("temp dir");
    let make = |name: &str, f: &dyn Fn(&mut SynthParams)| {
        let mut p = SynthParams::default();
        f(&mut p);
        synth_generate(&p, &root.path().join(name))
            .expect("synthetic dataset")
            .manifest_path
    };
    let border = make("border", &|_| {});
    let null = make("null", &|p| p.artifact.contrast = 0.0);
    let soft = make("soft", &|p| p.soft_lens_count = 100);
    Datasets {
        _root: root,
        border,
        null,
        soft,
    }
}

fn run(
    protocol: Protocol,
    manifest: &Path,
    out: Option<&Path>,
) -> Result<ExperimentReport, String> {
    let cfg = ExperimentConfig {
        protocol,
        ..ExperimentConfig::default()
    };
    run_experiment(&cfg, manifest, out).map_err(|e| e.to_string())
}

fn mean_of(
    report: &ExperimentReport,
    variant: &str,
) -> Result<msa_core::metrics::EvalReport, String> {
    report
        .variant(variant)
        .map(|v| v.mean.clone())
        .ok_or_else(|| format!("variant {variant} missing"))
}

fn end_to_end(d: &Datasets) -> Outcome {
    let std = mean_of(&run(Protocol::Standard, &d.border, None)?, "majority_vote")?;
    let null = mean_of(&run(Protocol::Standard, &d.null, None)?, "majority_vote")?;
    check(
        std.hter <= 2.0 && (40.0..=60.0).contains(&null.eer),
        format!(
            "mean HTER {:.2}%; null-artifact EER {:.2}%",
            std.hter, null.eer
        ),
    )
}

fn fusion_comparison(d: &Datasets) -> Outcome {
    let r = run(Protocol::FusionCompare, &d.border, None)?;
    let mv = mean_of(&r, "majority_vote")?;
    let ms = mean_of(&r, "mean_score")?;
    let rb = mean_of(&r, "resize_baseline")?;
    check(
        mv.hter <= rb.hter,
        format!(
            "HTER majority_vote {:.2}, mean_score {:.2}, resize_baseline {:.2}",
            mv.hter, ms.hter, rb.hter
        ),
    )
}

fn ring_profile(d: &Datasets) -> Outcome {
    let r = run(Protocol::RingAnalysis, &d.border, None)?;
    let mut good = 0;
    let mut mins = Vec::new();
    for p in &r.ring_profiles {
        let m = p.min_ring().ok_or("empty profile")?;
        mins.push(m);
        if (5..=8).contains(&m) && p.eers[0] > p.eers[m] {
            good += 1;
        }
    }
    let mean = r.mean_ring_profile.as_ref().ok_or("no mean profile")?;
    let eers: Vec<String> = mean.eers.iter().map(|e| format!("{e:.1}")).collect();
    check(
        r.ring_profiles.len() == 5 && good >= 4,
        format!(
            "{good}/5 repeats pass, min rings {mins:?}, mean EERs [{}]",
            eers.join(" ")
        ),
    )
}

fn soft_lens(d: &Datasets) -> Outcome {
    let hter = |p| -> Result<f64, String> {
        let r = run(p, &d.soft, None)?;
        Ok(r.variants.first().ok_or("no variant")?.mean.hter)
    };
    let (h1, h2) = (hter(Protocol::SoftLens1)?, hter(Protocol::SoftLens2)?);
    check(
        (h2 - h1).abs() <= 2.0,
        format!("HTER soft_lens_1 {h1:.2}, soft_lens_2 {h2:.2}"),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("prefix").display().to_string();
                out.insert(rel, fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism(d: &Datasets) -> Outcome {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    run(Protocol::Standard, &d.border, Some(a.path()))?;
    run(Protocol::Standard, &d.border, Some(b.path()))?;
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    let models = ta.keys().filter(|k| k.contains("model")).count();
    let reports = ta.keys().filter(|k| k.contains("report")).count();
    if models == 0 || reports == 0 {
        return Err("no model or report files written".into());
    }
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    check(
        ta.len() == tb.len() && differing.is_empty(),
        format!(
            "{} files identical ({models} models, {reports} reports); differing {differing:?}",
            ta.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 metric arithmetic", metric_arithmetic()),
        ("2 stripe combinatorics", stripe_combinatorics()),
        ("3 boundary extension", extension_properties()),
        ("4 rubber-sheet geometry", rubber_sheet_geometry()),
        ("5 EER/BPCER oracle", oracle_equivalence()),
    ];
    let d = datasets();
    results.push(("6 end-to-end detection", end_to_end(&d)));
    results.push(("7 fusion comparison", fusion_comparison(&d)));
    results.push(("8 ring profile", ring_profile(&d)));
    results.push(("9 soft-lens robustness", soft_lens(&d)));
    results.push(("10 determinism", determinism(&d)));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} passed, {failed} failed in {:.1} s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
