use std::path::Path;
use std::process::{Command, Output};

fn msa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msa"))
        .args(args)
        .output()
        .expect("spawn msa")
}

fn last_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("status line");
    serde_json::from_str(line).expect("status line is json")
}

fn synth(dir: &Path, n: usize) -> String {
    let out = dir.join("data");
    let n = n.to_string();
    let o = msa(&[
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--bona-fide",
        &n,
        "--attack",
        &n,
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.csv").to_str().unwrap().to_string()
}

#[test]
fn experiment_happy_path() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), 30);
    let out = tmp.path().join("exp");
    let o = msa(&[
        "experiment",
        "--protocol",
        "standard",
        "--manifest",
        &manifest,
        "--out",
        out.to_str().unwrap(),
        "--repeats",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(last_json(&o)["status"], "ok");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["protocol"], "standard");
    assert!(out.join("repeat_0").is_dir() && out.join("repeat_1").is_dir());
}

#[test]
fn oversized_stripe_height_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 2);
    let img = tmp.path().join("data/images/bf0000.png");
    let tex = tmp.path().join("t.msat");
    let o = msa(&[
        "normalize",
        "--image",
        img.to_str().unwrap(),
        "--out",
        tex.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stripes = tmp.path().join("st");
    let o = msa(&[
        "stripes",
        "--texture",
        tex.to_str().unwrap(),
        "--height",
        "80",
        "--out",
        stripes.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let status = last_json(&o);
    assert_eq!(status["status"], "error");
    assert!(status["message"].as_str().unwrap().contains("80"));

    let o = msa(&[
        "stripes",
        "--texture",
        tex.to_str().unwrap(),
        "--out",
        stripes.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(last_json(&o)["result"]["count"], 9);
}

#[test]
fn rings_writes_one_row_per_ring() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), 20);
    let out = tmp.path().join("rings");
    let o = msa(&[
        "rings",
        "--manifest",
        &manifest,
        "--n",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ring_profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("ring_index,eer,normalized"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn train_score_fuse_eval_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), 20);
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    for args in [
        vec!["train", "--manifest", &manifest, "--out", &p("m.json")],
        vec![
            "score",
            "--model",
            &p("m.json"),
            "--manifest",
            &manifest,
            "--out",
            &p("s.csv"),
        ],
        vec![
            "fuse",
            "--scores",
            &p("s.csv"),
            "--strategy",
            "mean_score",
            "--out",
            &p("d.csv"),
        ],
        vec![
            "eval",
            "--decisions",
            &p("d.csv"),
            "--manifest",
            &manifest,
            "--out",
            &p("r.json"),
            "--det",
            &p("det.csv"),
        ],
    ] {
        let o = msa(&args);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("r.json")).unwrap()).unwrap();
    assert!(report["hter"].as_f64().unwrap() <= 50.0);
    assert!(std::fs::read_to_string(p("det.csv"))
        .unwrap()
        .starts_with("threshold,apcer,bpcer"));
}

#[test]
fn usage_errors_exit_two() {
    let o = msa(&["stripes"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(last_json(&o)["kind"], "usage");
    let o = msa(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(msa(&["--help"]).status.code(), Some(0));
    assert_eq!(msa(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = msa(&[
        "eval",
        "--decisions",
        "/nonexistent/d.csv",
        "--manifest",
        "/nonexistent/m.csv",
        "--out",
        tmp.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(last_json(&o)["kind"], "runtime");
}
