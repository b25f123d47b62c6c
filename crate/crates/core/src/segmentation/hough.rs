//! Gradient-directed circular Hough detector for pupil and iris boundaries.
//!
//! Each edge pixel votes for centers along its gradient direction, over the
//! configured radius range. The best center is then given a radius by a
//! histogram of distances from edge pixels whose gradient is close to radial.
//! The pupil is searched first among edges bordering dark pixels, the iris
//! afterwards around the pupil center.

use serde::{Deserialize, Serialize};

use super::{CircleParams, Segmentation, SegmentationError};
use crate::imaging::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Inclusive pupil radius search range in pixels.
    pub pupil_radius: (f64, f64),
    /// Inclusive iris radius search range in pixels.
    pub iris_radius: (f64, f64),
    /// Largest allowed distance between pupil and iris centers.
    pub center_tolerance: f64,
    /// Minimum Sobel gradient magnitude (intensity levels per pixel).
    pub edge_threshold: f64,
    /// Pixels at or below this intensity count as pupil interior.
    pub pupil_max_intensity: u8,
    /// Minimum perimeter support (edge votes per unit circumference) to accept a circle.
    pub min_support: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pupil_radius: (10.0, 90.0),
            iris_radius: (40.0, 200.0),
            center_tolerance: 8.0,
            edge_threshold: 6.0,
            pupil_max_intensity: 70,
            min_support: 0.35,
        }
    }
}

/// Best circle found for one boundary, with its perimeter support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleCandidate {
    pub circle: CircleParams,
    pub support: f64,
}

struct Edge {
    x: f64,
    y: f64,
    // unit gradient, pointing towards brighter pixels
    ux: f64,
    uy: f64,
}

struct EdgeMap {
    width: usize,
    height: usize,
    smoothed: Vec<f64>,
    edges: Vec<Edge>,
}

fn gaussian_blur(img: &GrayImage) -> Vec<f64> {
    const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let w = img.width() as usize;
    let h = img.height() as usize;
    let src: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in K.iter().enumerate() {
                acc += wt * src[y * w + clamp(x as isize + k as isize - 2, w)];
            }
            tmp[y * w + x] = acc / 16.0;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in K.iter().enumerate() {
                acc += wt * tmp[clamp(y as isize + k as isize - 2, h) * w + x];
            }
            out[y * w + x] = acc / 16.0;
        }
    }
    out
}

fn edge_map(img: &GrayImage, threshold: f64) -> EdgeMap {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let s = gaussian_blur(img);
    let mut edges = Vec::new();
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let at = |dx: isize, dy: isize| {
                    s[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
                };
                let gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1))
                    - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
                let gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1))
                    - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
                let gx = gx / 8.0;
                let gy = gy / 8.0;
                let mag = gx.hypot(gy);
                if mag >= threshold && mag > 0.0 {
                    edges.push(Edge {
                        x: x as f64,
                        y: y as f64,
                        ux: gx / mag,
                        uy: gy / mag,
                    });
                }
            }
        }
    }
    EdgeMap {
        width: w,
        height: h,
        smoothed: s,
        edges,
    }
}

/// Accumulates center votes; returns the refined peak inside `window`
/// (x0, y0, x1, y1) inclusive, if any vote landed there.
fn vote_centers<'a>(
    map: &EdgeMap,
    edges: impl Iterator<Item = &'a Edge>,
    radius: (f64, f64),
    window: (usize, usize, usize, usize),
) -> Option<(f64, f64)> {
    let (w, h) = (map.width, map.height);
    let mut acc = vec![0u32; w * h];
    let r0 = radius.0.max(1.0).floor() as usize;
    let r1 = radius.1.ceil() as usize;
    for e in edges {
        for r in r0..=r1 {
            let cx = (e.x - r as f64 * e.ux).round();
            let cy = (e.y - r as f64 * e.uy).round();
            if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                continue;
            }
            acc[cy as usize * w + cx as usize] += 1;
        }
    }
    // 3x3 box sum so that votes split across neighboring cells still peak.
    let (x0, y0, x1, y1) = window;
    let mut best: Option<(u32, usize, usize)> = None;
    for y in y0..=y1.min(h - 1) {
        for x in x0..=x1.min(w - 1) {
            let mut sum = 0;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    sum += acc[yy * w + xx];
                }
            }
            if sum > 0 && best.is_none_or(|(b, _, _)| sum > b) {
                best = Some((sum, x, y));
            }
        }
    }
    let (_, bx, by) = best?;
    // Centroid of the 3x3 neighborhood around the peak.
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for yy in by.saturating_sub(1)..=(by + 1).min(h - 1) {
        for xx in bx.saturating_sub(1)..=(bx + 1).min(w - 1) {
            let v = acc[yy * w + xx] as f64;
            sx += v * xx as f64;
            sy += v * yy as f64;
            sw += v;
        }
    }
    Some((sx / sw, sy / sw))
}

/// Radius with the best perimeter support around a fixed center.
fn fit_radius<'a>(
    edges: impl Iterator<Item = &'a Edge>,
    center: (f64, f64),
    radius: (f64, f64),
) -> Option<CircleCandidate> {
    let r0 = radius.0.max(1.0);
    let r1 = radius.1;
    if r1 < r0 {
        return None;
    }
    let bins = r1.ceil() as usize + 2;
    let mut hist = vec![0.0f64; bins + 1];
    let cos_limit = (30f64).to_radians().cos();
    for e in edges {
        let dx = e.x - center.0;
        let dy = e.y - center.1;
        let d = dx.hypot(dy);
        if d < r0 - 1.0 || d > r1 + 1.0 || d == 0.0 {
            continue;
        }
        if (e.ux * dx + e.uy * dy) / d < cos_limit {
            continue;
        }
        let b = d.round() as usize;
        if b <= bins {
            hist[b] += 1.0;
        }
    }
    let mut best: Option<CircleCandidate> = None;
    for r in r0.ceil() as usize..=r1.floor() as usize {
        let lo = r.saturating_sub(1);
        let window: f64 = hist[lo..=(r + 1).min(bins)].iter().sum();
        let support = window / (2.0 * std::f64::consts::PI * r as f64);
        if best.is_none_or(|b| support > b.support) {
            // Weighted mean over the window gives a fractional radius.
            let mut num = 0.0;
            for (i, v) in hist.iter().enumerate().take((r + 1).min(bins) + 1).skip(lo) {
                num += i as f64 * v;
            }
            let rr = if window > 0.0 { num / window } else { r as f64 };
            best = Some(CircleCandidate {
                circle: CircleParams::new(center.0, center.1, rr),
                support,
            });
        }
    }
    best
}

pub fn detect_circles(
    img: &GrayImage,
    config: &DetectorConfig,
) -> Result<Segmentation, SegmentationError> {
    let map = edge_map(img, config.edge_threshold);
    let (w, h) = (map.width, map.height);
    let dark = config.pupil_max_intensity as f64;
    let full = (0, 0, w.saturating_sub(1), h.saturating_sub(1));

    let is_pupil_edge = |e: &Edge| {
        let px = (e.x - 2.0 * e.ux).round().clamp(0.0, (w - 1) as f64) as usize;
        let py = (e.y - 2.0 * e.uy).round().clamp(0.0, (h - 1) as f64) as usize;
        map.smoothed[py * w + px] <= dark
    };

    let fail = |reason: &str, pupil, iris| SegmentationError::Failed {
        reason: reason.to_string(),
        pupil,
        iris,
    };

    let pupil_center = vote_centers(
        &map,
        map.edges.iter().filter(|e| is_pupil_edge(e)),
        config.pupil_radius,
        full,
    )
    .ok_or_else(|| fail("no pupil edge votes", None, None))?;
    let pupil = fit_radius(
        map.edges.iter().filter(|e| is_pupil_edge(e)),
        pupil_center,
        config.pupil_radius,
    )
    .ok_or_else(|| fail("empty pupil radius range", None, None))?;
    if pupil.support < config.min_support {
        return Err(fail("pupil support below threshold", Some(pupil), None));
    }

    let p = pupil.circle;
    let exclude = p.r + 3.0;
    let outer_edges = || {
        map.edges
            .iter()
            .filter(move |e| (e.x - p.cx).hypot(e.y - p.cy) > exclude)
    };
    let tol = config.center_tolerance.max(0.0);
    let iris_range = (config.iris_radius.0.max(p.r * 1.1), config.iris_radius.1);
    let reach = (iris_range.0 - tol - 2.0, iris_range.1 + tol + 2.0);
    let candidates: Vec<&Edge> = outer_edges()
        .filter(|e| {
            let d = (e.x - p.cx).hypot(e.y - p.cy);
            d >= reach.0 && d <= reach.1
        })
        .collect();
    // Exhaustive search over integer centers within the tolerance disk.
    let mut iris: Option<CircleCandidate> = None;
    let (bx, by) = (p.cx.round(), p.cy.round());
    let span = tol.ceil() as i64;
    for dy in -span..=span {
        for dx in -span..=span {
            let c = (bx + dx as f64, by + dy as f64);
            if (c.0 - p.cx).hypot(c.1 - p.cy) > tol {
                continue;
            }
            if let Some(cand) = fit_radius(candidates.iter().copied(), c, iris_range) {
                if iris.is_none_or(|b| cand.support > b.support) {
                    iris = Some(cand);
                }
            }
        }
    }
    let iris = iris.ok_or_else(|| fail("no iris candidate near the pupil", Some(pupil), None))?;
    if iris.support < config.min_support {
        return Err(fail(
            "iris support below threshold",
            Some(pupil),
            Some(iris),
        ));
    }
    Segmentation::new(p, iris.circle).map_err(|reason| fail(&reason, Some(pupil), Some(iris)))
}
