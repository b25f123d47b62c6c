//! Pupil / iris circles, the segmentation text format and boundary extension.
//!
//! The extended annulus keeps the iris center and moves both radii by a
//! fraction of the iris-pupil radial distance:
//!
//! ```text
//! inner = r_iris - (r_iris - r_pupil) * s1
//! outer = r_iris + (r_iris - r_pupil) * s2
//! ```

mod format;
mod hough;

pub use format::{load_segmentation, load_segmentations, parse_segmentations, write_segmentations};
pub use hough::{detect_circles, CircleCandidate, DetectorConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default extension ratios.
pub const DEFAULT_S1: f64 = 2.0 / 5.0;
pub const DEFAULT_S2: f64 = 2.0 / 5.0;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: malformed segmentation: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("expected exactly one segmentation record, found {0}")]
    RecordCount(usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("segmentation failed: {reason}")]
    Failed {
        reason: String,
        pupil: Option<CircleCandidate>,
        iris: Option<CircleCandidate>,
    },
    #[error("invalid extension ratios s1={s1}, s2={s2}: both must lie in (0, 1)")]
    InvalidRatios { s1: f64, s2: f64 },
    #[error("degenerate extended boundaries: inner radius {inner}, outer radius {outer}")]
    Degenerate { inner: f64, outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleParams {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl CircleParams {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    /// Point at angle `theta` (radians, 0 along +x, counter-clockwise on screen).
    #[inline]
    pub fn point_at(&self, theta: f64) -> (f64, f64) {
        (
            self.cx + self.r * theta.cos(),
            self.cy - self.r * theta.sin(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub pupil: CircleParams,
    pub iris: CircleParams,
}

impl Segmentation {
    /// Validates `pupil.r < iris.r`, positive radii and the pupil center
    /// lying inside the iris circle.
    pub fn new(pupil: CircleParams, iris: CircleParams) -> Result<Self, String> {
        let all = [pupil.cx, pupil.cy, pupil.r, iris.cx, iris.cy, iris.r];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if pupil.r <= 0.0 || iris.r <= 0.0 {
            return Err("radii must be positive".into());
        }
        if pupil.r >= iris.r {
            return Err(format!(
                "pupil radius {} not smaller than iris radius {}",
                pupil.r, iris.r
            ));
        }
        let d = (pupil.cx - iris.cx).hypot(pupil.cy - iris.cy);
        if d >= iris.r {
            return Err("pupil center outside the iris circle".into());
        }
        Ok(Self { pupil, iris })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedBoundaries {
    pub inner: CircleParams,
    pub outer: CircleParams,
    pub s1: f64,
    pub s2: f64,
}

impl ExtendedBoundaries {
    pub fn radial_width(&self) -> f64 {
        self.outer.r - self.inner.r
    }
}

pub fn extend_boundaries(
    seg: &Segmentation,
    s1: f64,
    s2: f64,
) -> Result<ExtendedBoundaries, SegmentationError> {
    let in_unit = |s: f64| s > 0.0 && s < 1.0;
    let band = seg.iris.r - seg.pupil.r;
    let inner_r = seg.iris.r - band * s1;
    let outer_r = seg.iris.r + band * s2;
    if !in_unit(s1) || !in_unit(s2) {
        if inner_r >= outer_r {
            return Err(SegmentationError::Degenerate {
                inner: inner_r,
                outer: outer_r,
            });
        }
        return Err(SegmentationError::InvalidRatios { s1, s2 });
    }
    if inner_r <= 0.0 || inner_r >= outer_r {
        return Err(SegmentationError::Degenerate {
            inner: inner_r,
            outer: outer_r,
        });
    }
    let (cx, cy) = (seg.iris.cx, seg.iris.cy);
    Ok(ExtendedBoundaries {
        inner: CircleParams::new(cx, cy, inner_r),
        outer: CircleParams::new(cx, cy, outer_r),
        s1,
        s2,
    })
}
