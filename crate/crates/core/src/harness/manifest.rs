//! Dataset manifest CSV.
//!
//! Header: `image_id,path,split,truth,lens_type,segmentation_ref`. Relative
//! paths resolve against the manifest's directory. `segmentation_ref` names a
//! segmentation file holding one record, or `file#N` for the N-th record
//! (zero-based) of a multi-record file. An empty `lens_type` means `none`.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::PadLabel;

pub const MANIFEST_HEADER: [&str; 6] = [
    "image_id",
    "path",
    "split",
    "truth",
    "lens_type",
    "segmentation_ref",
];

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("manifest header must be `{}`", MANIFEST_HEADER.join(","))]
    Header,
    #[error("manifest line {line}: lens type {lens_type} is inconsistent with truth {truth}")]
    Inconsistent {
        line: u64,
        truth: PadLabel,
        lens_type: LensType,
    },
    #[error("manifest line {line}: duplicate image_id {image_id}")]
    Duplicate { line: u64, image_id: String },
    #[error("manifest i/o on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensType {
    None,
    Soft,
    Textured,
    Printout,
    TexturedPrintout,
}

impl LensType {
    pub fn as_str(self) -> &'static str {
        match self {
            LensType::None => "none",
            LensType::Soft => "soft",
            LensType::Textured => "textured",
            LensType::Printout => "printout",
            LensType::TexturedPrintout => "textured_printout",
        }
    }

    /// Ground truth implied by the lens type.
    pub fn implied_truth(self) -> PadLabel {
        match self {
            LensType::None | LensType::Soft => PadLabel::BonaFide,
            _ => PadLabel::Attack,
        }
    }
}

impl fmt::Display for LensType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LensType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => LensType::None,
            "soft" => LensType::Soft,
            "textured" => LensType::Textured,
            "printout" => LensType::Printout,
            "textured_printout" => LensType::TexturedPrintout,
            _ => return Err(format!("unknown lens type {s:?}")),
        })
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "train" => Split::Train,
            "dev" => Split::Dev,
            "test" => Split::Test,
            _ => return Err(format!("unknown split {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub path: String,
    pub split: Split,
    pub truth: PadLabel,
    pub lens_type: LensType,
    pub segmentation_ref: Option<String>,
}

/// A reference into a segmentation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationRef {
    pub path: String,
    pub index: Option<usize>,
}

impl SegmentationRef {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.rsplit_once('#') {
            Some((path, idx)) => {
                let index = idx
                    .parse()
                    .map_err(|_| format!("invalid record index {idx:?} in segmentation_ref"))?;
                if path.is_empty() {
                    return Err("empty path in segmentation_ref".into());
                }
                Ok(Self {
                    path: path.to_string(),
                    index: Some(index),
                })
            }
            None => Ok(Self {
                path: s.to_string(),
                index: None,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn parse_manifest<R: Read>(input: R) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| ManifestError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(ManifestError::Header);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| ManifestError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| ManifestError::Parse { line, message };
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(format!("expected 6 fields, found {}", row.len())));
        }
        let image_id = row[0].to_string();
        if image_id.is_empty() {
            return Err(parse_err("empty image_id".into()));
        }
        if row[1].is_empty() {
            return Err(parse_err("empty path".into()));
        }
        let split: Split = row[2].parse().map_err(parse_err)?;
        let truth: PadLabel = row[3].parse().map_err(parse_err)?;
        let lens_type: LensType = if row[4].is_empty() {
            LensType::None
        } else {
            row[4].parse().map_err(parse_err)?
        };
        if lens_type.implied_truth() != truth {
            return Err(ManifestError::Inconsistent {
                line,
                truth,
                lens_type,
            });
        }
        let segmentation_ref = match &row[5] {
            "" => None,
            s => {
                SegmentationRef::parse(s).map_err(parse_err)?;
                Some(s.to_string())
            }
        };
        if !seen.insert(image_id.clone()) {
            return Err(ManifestError::Duplicate { line, image_id });
        }
        out.push(ManifestRecord {
            image_id,
            path: row[1].to_string(),
            split,
            truth,
            lens_type,
            segmentation_ref,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let records = parse_manifest(std::io::BufReader::new(file))?;
    Ok(Manifest {
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        records,
    })
}

pub fn write_manifest<W: Write>(out: W, records: &[ManifestRecord]) -> Result<(), ManifestError> {
    let io = |e: csv::Error| ManifestError::Io {
        path: "<manifest>".into(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.image_id.as_str(),
            r.path.as_str(),
            r.split.as_str(),
            r.truth.as_str(),
            r.lens_type.as_str(),
            r.segmentation_ref.as_deref().unwrap_or(""),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ManifestError::Io {
        path: "<manifest>".into(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "image_id,path,split,truth,lens_type,segmentation_ref\n";

    fn parse(body: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
        parse_manifest(format!("{HEADER}{body}").as_bytes())
    }

    #[test]
    fn valid_attack_row() {
        let r = parse("a1,imgs/a1.png,train,attack,textured,\n").unwrap();
        assert_eq!(
            r[0],
            ManifestRecord {
                image_id: "a1".into(),
                path: "imgs/a1.png".into(),
                split: Split::Train,
                truth: PadLabel::Attack,
                lens_type: LensType::Textured,
                segmentation_ref: None,
            }
        );
    }

    #[test]
    fn inconsistent_and_duplicate_rows() {
        assert_eq!(
            parse("b1,b1.png,test,bona_fide,textured,\n").unwrap_err(),
            ManifestError::Inconsistent {
                line: 2,
                truth: PadLabel::BonaFide,
                lens_type: LensType::Textured
            }
        );
        assert!(matches!(
            parse("s1,s.png,test,attack,soft,\n"),
            Err(ManifestError::Inconsistent { line: 2, .. })
        ));
        assert_eq!(
            parse("a,a.png,train,attack,printout,\nb,b.png,dev,bona_fide,none,\na,c.png,test,attack,textured,\n")
                .unwrap_err(),
            ManifestError::Duplicate {
                line: 4,
                image_id: "a".into()
            }
        );
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert!(matches!(
            parse("a,a.png,validation,attack,textured,\n"),
            Err(ManifestError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("a,a.png,train,attack,textured,seg.txt#x\n"),
            Err(ManifestError::Parse { line: 2, .. })
        ));
        assert_eq!(
            parse_manifest("id,path\n".as_bytes()).unwrap_err(),
            ManifestError::Header
        );
    }

    #[test]
    fn segmentation_ref_syntax() {
        assert_eq!(
            SegmentationRef::parse("seg.txt#3").unwrap(),
            SegmentationRef {
                path: "seg.txt".into(),
                index: Some(3)
            }
        );
        assert_eq!(SegmentationRef::parse("a/b.txt").unwrap().index, None);
        assert!(SegmentationRef::parse("#2").is_err());
    }

    #[test]
    fn write_then_parse_round_trip() {
        let recs = parse(
            "a,a.png,train,attack,printout,seg.txt#0\nb,b.png,dev,bona_fide,soft,\nc,c.png,test,bona_fide,none,c.seg\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &recs).unwrap();
        assert_eq!(parse_manifest(buf.as_slice()).unwrap(), recs);
    }
}
