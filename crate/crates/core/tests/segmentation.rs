mod common;

use msa_core::harness::{eye_specs, render_eye, SynthParams};
use msa_core::segmentation::{
    detect_circles, extend_boundaries, parse_segmentations, write_segmentations, CircleParams,
    DetectorConfig, Segmentation, DEFAULT_S1, DEFAULT_S2,
};
use proptest::prelude::*;

fn seg(cx: f64, cy: f64, rp: f64, ri: f64) -> Segmentation {
    Segmentation::new(CircleParams::new(cx, cy, rp), CircleParams::new(cx, cy, ri)).unwrap()
}

#[test]
fn worked_extension_example() {
    let b = extend_boundaries(&seg(100.0, 100.0, 30.0, 80.0), 2.0 / 5.0, 2.0 / 5.0).unwrap();
    assert_eq!(b.inner.r, 60.0);
    assert_eq!(b.outer.r, 100.0);
    assert_eq!((b.inner.cx, b.inner.cy), (100.0, 100.0));
}

#[test]
fn extension_scales_with_the_eye() {
    let mut r = common::rng(21);
    use rand::Rng;
    for _ in 0..1000 {
        let rp = r.random_range(5.0..60.0);
        let ri = rp + r.random_range(5.0..120.0);
        let k = r.random_range(0.1..10.0);
        let base = extend_boundaries(&seg(0.0, 0.0, rp, ri), DEFAULT_S1, DEFAULT_S2).unwrap();
        let scaled =
            extend_boundaries(&seg(0.0, 0.0, k * rp, k * ri), DEFAULT_S1, DEFAULT_S2).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(scaled.inner.r, k * base.inner.r) <= 1e-9);
        assert!(rel(scaled.outer.r, k * base.outer.r) <= 1e-9);
    }
}

proptest! {
    #[test]
    fn extension_stays_ordered(rp in 1.0f64..80.0, gap in 1.0f64..150.0, s1 in 0.01f64..0.99, s2 in 0.01f64..0.99) {
        let s = seg(50.0, 50.0, rp, rp + gap);
        let b = extend_boundaries(&s, s1, s2).unwrap();
        prop_assert!(b.inner.r > rp && b.inner.r < s.iris.r);
        prop_assert!(b.outer.r > s.iris.r);
        prop_assert!((b.radial_width() - gap * (s1 + s2)).abs() <= 1e-9 * gap);
    }

    #[test]
    fn segmentation_text_round_trips(cx in -1e3f64..1e3, cy in -1e3f64..1e3, rp in 1.0f64..50.0, gap in 1.0f64..100.0) {
        let s = seg(cx, cy, rp, rp + gap);
        let back = parse_segmentations(&write_segmentations([&s])).unwrap();
        prop_assert_eq!(back, vec![s]);
    }
}

#[test]
fn invalid_ratios_rejected() {
    let s = seg(0.0, 0.0, 30.0, 80.0);
    assert!(extend_boundaries(&s, 0.0, 0.4).is_err());
    assert!(extend_boundaries(&s, 0.4, 1.0).is_err());
}

#[test]
fn detector_recovers_generated_circles() {
    let p = SynthParams {
        bona_fide_count: 30,
        attack_count: 30,
        seed: 5,
        ..SynthParams::default()
    };
    let specs = eye_specs(&p);
    assert!(specs.len() >= 50);
    let cfg = DetectorConfig::default();
    for spec in &specs {
        let img = render_eye(spec, &p, 0.0);
        let got = detect_circles(&img, &cfg).unwrap();
        let want = spec.segmentation;
        for (g, w) in [(got.pupil, want.pupil), (got.iris, want.iris)] {
            let tol = 0.05 * w.r;
            assert!(
                (g.r - w.r).abs() <= tol,
                "{}: radius {} vs {}",
                spec.image_id,
                g.r,
                w.r
            );
            assert!(
                (g.cx - w.cx).hypot(g.cy - w.cy) <= 3.0,
                "{}: center {:?} vs {:?}",
                spec.image_id,
                g,
                w
            );
        }
    }
}
