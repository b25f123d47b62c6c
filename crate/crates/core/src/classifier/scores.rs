//! Score CSV: header `image_id,stripe_offset,p_attack`, one row per stripe.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, StripeScore};

/// `(image_id, stripe_offset)`.
pub type ScoreKey = (String, usize);
pub type ScoreMap = BTreeMap<ScoreKey, StripeScore>;

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    image_id: String,
    stripe_offset: usize,
    p_attack: f64,
}

pub fn parse_scores<R: Read>(input: R) -> Result<ScoreMap, ClassifierError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| ClassifierError::ScoreParse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().ne(["image_id", "stripe_offset", "p_attack"]) {
        return Err(ClassifierError::ScoreParse {
            line: 1,
            message: "expected header image_id,stripe_offset,p_attack".into(),
        });
    }
    let mut out = ScoreMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| ClassifierError::ScoreParse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: ScoreRow =
            record
                .deserialize(Some(&headers))
                .map_err(|e| ClassifierError::ScoreParse {
                    line,
                    message: e.to_string(),
                })?;
        if !(0.0..=1.0).contains(&row.p_attack) {
            return Err(ClassifierError::ScoreRange {
                line,
                value: row.p_attack,
            });
        }
        let key = (row.image_id, row.stripe_offset);
        if out.contains_key(&key) {
            return Err(ClassifierError::DuplicateScore {
                line,
                image_id: key.0,
                stripe_offset: key.1,
            });
        }
        out.insert(
            key,
            StripeScore {
                p_attack: row.p_attack,
                stripe_offset: row.stripe_offset,
            },
        );
    }
    Ok(out)
}

pub fn import_scores(path: impl AsRef<Path>) -> Result<ScoreMap, ClassifierError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ClassifierError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_scores(std::io::BufReader::new(file))
}

pub fn write_scores<W: Write>(out: W, scores: &ScoreMap) -> Result<(), ClassifierError> {
    let io = |e: csv::Error| ClassifierError::Io {
        path: "<score csv>".into(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "stripe_offset", "p_attack"])
        .map_err(io)?;
    for ((id, offset), s) in scores {
        w.serialize((id, offset, s.p_attack)).map_err(io)?;
    }
    w.flush().map_err(|e| ClassifierError::Io {
        path: "<score csv>".into(),
        reason: e.to_string(),
    })
}
