//! Reference implementations and fixtures shared by the integration suites.
#![allow(dead_code)]

use msa_core::fusion::PadLabel;
use msa_core::harness::SynthParams;
use msa_core::metrics::ScoredSample;
use msa_core::segmentation::{CircleParams, Segmentation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

/// APCER and BPCER in percent at threshold `t`, counted sample by sample.
pub fn rates_at(samples: &[ScoredSample], t: f64) -> (f64, f64) {
    let attacks: Vec<_> = samples
        .iter()
        .filter(|s| s.truth == PadLabel::Attack)
        .collect();
    let bona: Vec<_> = samples
        .iter()
        .filter(|s| s.truth == PadLabel::BonaFide)
        .collect();
    let missed = attacks.iter().filter(|s| s.score <= t).count();
    let rejected = bona.iter().filter(|s| s.score > t).count();
    (
        100.0 * missed as f64 / attacks.len() as f64,
        100.0 * rejected as f64 / bona.len() as f64,
    )
}

/// Every threshold at which the decision of some sample can change.
pub fn candidate_thresholds(samples: &[ScoredSample]) -> Vec<f64> {
    let mut t: Vec<f64> = samples.iter().map(|s| s.score).collect();
    t.push(f64::NEG_INFINITY);
    t.push(f64::INFINITY);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// EER and its threshold by exhaustive search for the sign change of
/// `apcer - bpcer` over all candidate thresholds.
pub fn eer_oracle(samples: &[ScoredSample]) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = candidate_thresholds(samples)
        .into_iter()
        .map(|t| {
            let (a, b) = rates_at(samples, t);
            (t, a, b)
        })
        .collect();
    for i in 0..pts.len() {
        let (t, a, b) = pts[i];
        let d = a - b;
        if d == 0.0 {
            return (a, t);
        }
        if d > 0.0 {
            if i == 0 {
                return (a, t);
            }
            let (t0, a0, b0) = pts[i - 1];
            let d0 = a0 - b0;
            let alpha = -d0 / (d - d0);
            let rate = a0 + alpha * (a - a0);
            let thr = if !t0.is_finite() {
                t
            } else if !t.is_finite() {
                t0
            } else {
                t0 + alpha * (t - t0)
            };
            return (rate, thr);
        }
    }
    unreachable!("apcer reaches 100 at +inf");
}

/// Lowest BPCER among thresholds whose APCER stays within the target.
pub fn bpcer_oracle(samples: &[ScoredSample], target: f64) -> f64 {
    candidate_thresholds(samples)
        .into_iter()
        .map(|t| rates_at(samples, t))
        .filter(|&(a, _)| a <= target + EPS)
        .map(|(_, b)| b)
        .fold(100.0, f64::min)
}

/// Random score set with both classes present; scores drawn from a small
/// grid so ties are common.
pub fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredSample> {
    let n_attack = rng.random_range(1..n);
    let grid = rng.random_range(3..40);
    (0..n)
        .map(|i| {
            let truth = if i < n_attack {
                PadLabel::Attack
            } else {
                PadLabel::BonaFide
            };
            let shift = if truth == PadLabel::Attack {
                rng.random_range(0..grid / 2 + 1)
            } else {
                0
            };
            let score = ((rng.random_range(0..grid) + shift).min(grid) as f64) / grid as f64;
            ScoredSample {
                image_id: format!("s{i}"),
                truth,
                score,
                decision: None,
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Concentric-circle scene: dark inside `radius`, bright outside.
pub fn step_image(size: u32, cx: f64, cy: f64, radius: f64) -> msa_core::imaging::GrayImage {
    msa_core::imaging::GrayImage::from_fn(size, size, |x, y| {
        if (x as f64 - cx).hypot(y as f64 - cy) < radius {
            0
        } else {
            255
        }
    })
    .expect("valid dimensions")
}

/// Segmentation rotated counter-clockwise on screen about the iris center.
pub fn rotate_segmentation(seg: &Segmentation, angle: f64) -> Segmentation {
    let (cx, cy) = (seg.iris.cx, seg.iris.cy);
    let (dx, dy) = (seg.pupil.cx - cx, seg.pupil.cy - cy);
    let (s, c) = angle.sin_cos();
    let nx = dx * c + dy * s;
    let ny = -dx * s + dy * c;
    Segmentation {
        pupil: CircleParams::new(cx + nx, cy + ny, seg.pupil.r),
        iris: seg.iris,
    }
}

/// Generator settings without sensor noise.
pub fn noiseless_params(seed: u64) -> SynthParams {
    let mut p = SynthParams {
        seed,
        ..SynthParams::default()
    };
    p.texture.noise_sigma = 0.0;
    p
}
