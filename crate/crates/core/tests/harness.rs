use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use msa_core::fusion::PadLabel;
use msa_core::harness::{
    load_manifest, parse_manifest, run_experiment, synth_generate, write_manifest,
    ExperimentConfig, LensType, ManifestError, Protocol, Split, SynthParams,
};
use msa_core::segmentation::load_segmentations;

fn small(seed: u64, n: usize) -> SynthParams {
    SynthParams {
        seed,
        bona_fide_count: n,
        attack_count: n,
        ..SynthParams::default()
    }
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut p = small(4, 6);
    p.soft_lens_count = 4;
    synth_generate(&p, a.path()).unwrap();
    synth_generate(&p, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 16 + 3);
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    synth_generate(&small(5, 6), c.path()).unwrap();
    assert_ne!(ta["manifest.csv"], tree(c.path())["manifest.csv"]);
}

#[test]
fn synth_manifest_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = small(6, 20);
    p.soft_lens_count = 10;
    let out = synth_generate(&p, dir.path()).unwrap();
    let m = load_manifest(&out.manifest_path).unwrap();
    assert_eq!(m.records, out.records);
    let segs = load_segmentations(&out.segmentation_path).unwrap();
    assert_eq!(segs.len(), 50);
    for r in &m.records {
        assert!(m.resolve(&r.path).is_file());
        let expect = if r.lens_type == LensType::Textured {
            PadLabel::Attack
        } else {
            PadLabel::BonaFide
        };
        assert_eq!(r.truth, expect);
    }
    for lens in [LensType::None, LensType::Textured, LensType::Soft] {
        for split in [Split::Train, Split::Dev, Split::Test] {
            let n = m
                .records
                .iter()
                .filter(|r| r.lens_type == lens && r.split == split)
                .count();
            assert!(n > 0, "{lens:?} {split:?}");
        }
    }
}

#[test]
fn manifest_round_trips_and_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_generate(&small(7, 3), dir.path()).unwrap();
    let mut buf = Vec::new();
    write_manifest(&mut buf, &out.records).unwrap();
    assert_eq!(parse_manifest(buf.as_slice()).unwrap(), out.records);

    let header = "image_id,path,split,truth,lens_type,segmentation_ref\n";
    let bad = [
        "a,a.png,train,attack,soft,\n",
        "a,a.png,holdout,attack,textured,\n",
        "a,a.png,train,attack,textured,\na,b.png,test,bona_fide,none,\n",
        "a,,train,attack,textured,\n",
    ];
    for row in bad {
        assert!(
            parse_manifest(format!("{header}{row}").as_bytes()).is_err(),
            "{row}"
        );
    }
    assert!(matches!(
        parse_manifest("id,path\n".as_bytes()),
        Err(ManifestError::Header)
    ));
    let ok =
        parse_manifest(format!("{header}a,a.png,test,bona_fide,,seg.txt#2\n").as_bytes()).unwrap();
    assert_eq!(ok[0].lens_type, LensType::None);
}

#[test]
fn experiment_outputs_are_reproducible() {
    let data = tempfile::tempdir().unwrap();
    let out = synth_generate(&small(8, 20), data.path()).unwrap();
    let cfg = ExperimentConfig {
        protocol: Protocol::FusionCompare,
        repeat_count: 2,
        ..ExperimentConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, &out.manifest_path, Some(a.path())).unwrap();
    let rb = run_experiment(&cfg, &out.manifest_path, Some(b.path())).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(tree(a.path()), tree(b.path()));
    let names: Vec<&str> = ra.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["majority_vote", "mean_score", "resize_baseline"]);
    assert_eq!(ra.provenance.repeat_seeds, vec![0, 1]);
}

#[test]
fn protocols_reject_missing_soft_lenses() {
    let data = tempfile::tempdir().unwrap();
    let out = synth_generate(&small(9, 8), data.path()).unwrap();
    for protocol in [
        Protocol::SoftLens1,
        Protocol::SoftLens2,
        Protocol::SoftLens3,
    ] {
        let cfg = ExperimentConfig {
            protocol,
            repeat_count: 1,
            ..ExperimentConfig::default()
        };
        assert!(
            run_experiment(&cfg, &out.manifest_path, None).is_err(),
            "{protocol:?}"
        );
    }
}

#[test]
fn stripe_ablation_reports_each_height() {
    let data = tempfile::tempdir().unwrap();
    let out = synth_generate(&small(10, 15), data.path()).unwrap();
    let cfg = ExperimentConfig {
        protocol: Protocol::StripeAblation,
        repeat_count: 1,
        ..ExperimentConfig::default()
    };
    let r = run_experiment(&cfg, &out.manifest_path, None).unwrap();
    let names: Vec<&str> = r.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["h24", "h32", "h48", "h64"]);
}
