//! Text format: one record per line,
//! `pupil_cx pupil_cy pupil_r iris_cx iris_cy iris_r`, `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use super::{CircleParams, Segmentation, SegmentationError};

pub fn parse_segmentations(text: &str) -> Result<Vec<Segmentation>, SegmentationError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(SegmentationError::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 6];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|_| SegmentationError::Parse {
                line: line_no,
                message: format!("invalid number {field:?}"),
            })?;
        }
        let seg = Segmentation::new(
            CircleParams::new(v[0], v[1], v[2]),
            CircleParams::new(v[3], v[4], v[5]),
        )
        .map_err(|reason| SegmentationError::Malformed {
            line: line_no,
            reason,
        })?;
        out.push(seg);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, SegmentationError> {
    std::fs::read_to_string(path).map_err(|source| SegmentationError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a file holding a single segmentation record.
pub fn load_segmentation(path: impl AsRef<Path>) -> Result<Segmentation, SegmentationError> {
    let mut all = parse_segmentations(&read(path.as_ref())?)?;
    if all.len() != 1 {
        return Err(SegmentationError::RecordCount(all.len()));
    }
    Ok(all.remove(0))
}

pub fn load_segmentations(path: impl AsRef<Path>) -> Result<Vec<Segmentation>, SegmentationError> {
    parse_segmentations(&read(path.as_ref())?)
}

pub fn write_segmentations<'a>(segs: impl IntoIterator<Item = &'a Segmentation>) -> String {
    let mut out = String::from("# pupil_cx pupil_cy pupil_r iris_cx iris_cy iris_r\n");
    for s in segs {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            s.pupil.cx, s.pupil.cy, s.pupil.r, s.iris.cx, s.iris.cy, s.iris.r
        );
    }
    out
}
