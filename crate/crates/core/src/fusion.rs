//! Per-image decisions from per-stripe scores.
//!
//! A stripe votes attack iff its score is strictly greater than the
//! threshold, so a score sitting exactly on the threshold counts as bona fide.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{score_texture, ClassifierError, ClassifierModel, StripeScore};
use crate::normalization::NormalizedTexture;

pub const STRIPE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadLabel {
    BonaFide,
    Attack,
}

impl PadLabel {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score > threshold {
            PadLabel::Attack
        } else {
            PadLabel::BonaFide
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PadLabel::BonaFide => "bona_fide",
            PadLabel::Attack => "attack",
        }
    }

    /// 1.0 for attack, 0.0 for bona fide.
    pub fn target(self) -> f64 {
        match self {
            PadLabel::BonaFide => 0.0,
            PadLabel::Attack => 1.0,
        }
    }
}

impl fmt::Display for PadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PadLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bona_fide" => Ok(PadLabel::BonaFide),
            "attack" => Ok(PadLabel::Attack),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    MajorityVote,
    MeanScore,
    ResizeBaseline,
}

impl FusionStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::MajorityVote => "majority_vote",
            FusionStrategy::MeanScore => "mean_score",
            FusionStrategy::ResizeBaseline => "resize_baseline",
        }
    }
}

impl FromStr for FusionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority_vote" => Ok(FusionStrategy::MajorityVote),
            "mean_score" => Ok(FusionStrategy::MeanScore),
            "resize_baseline" => Ok(FusionStrategy::ResizeBaseline),
            other => Err(format!("unknown fusion strategy {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no stripe scores to fuse")]
    Empty,
    #[error("majority vote needs an odd number of stripes, got {0}")]
    EvenCount(usize),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("decision csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadDecision {
    pub label: PadLabel,
    pub fused_score: f64,
    pub strategy: FusionStrategy,
    pub votes_attack: usize,
    pub votes_total: usize,
}

/// Decision-level fusion; `fused_score` is the fraction of attack votes.
pub fn majority_vote(scores: &[StripeScore], threshold: f64) -> Result<PadDecision, FusionError> {
    if scores.is_empty() {
        return Err(FusionError::Empty);
    }
    if scores.len().is_multiple_of(2) {
        return Err(FusionError::EvenCount(scores.len()));
    }
    let votes_attack = scores
        .iter()
        .filter(|s| PadLabel::from_score(s.p_attack, threshold) == PadLabel::Attack)
        .count();
    let votes_total = scores.len();
    let label = if 2 * votes_attack > votes_total {
        PadLabel::Attack
    } else {
        PadLabel::BonaFide
    };
    Ok(PadDecision {
        label,
        fused_score: votes_attack as f64 / votes_total as f64,
        strategy: FusionStrategy::MajorityVote,
        votes_attack,
        votes_total,
    })
}

/// Score-level fusion by the arithmetic mean.
pub fn mean_score(scores: &[StripeScore], threshold: f64) -> Result<PadDecision, FusionError> {
    if scores.is_empty() {
        return Err(FusionError::Empty);
    }
    let mean = scores.iter().map(|s| s.p_attack).sum::<f64>() / scores.len() as f64;
    let votes_attack = scores
        .iter()
        .filter(|s| PadLabel::from_score(s.p_attack, threshold) == PadLabel::Attack)
        .count();
    Ok(PadDecision {
        label: PadLabel::from_score(mean, threshold),
        fused_score: mean,
        strategy: FusionStrategy::MeanScore,
        votes_attack,
        votes_total: scores.len(),
    })
}

/// Resamples the whole texture to the model's stripe height and scores it once.
pub fn resize_baseline(
    tex: &NormalizedTexture,
    model: &ClassifierModel,
    stripe_height: usize,
) -> Result<PadDecision, FusionError> {
    let resized = tex
        .resample_rows(stripe_height)
        .map_err(|e| ClassifierError::Texture(e.to_string()))?;
    let score = score_texture(model, &resized, 0)?;
    let label = PadLabel::from_score(score.p_attack, STRIPE_THRESHOLD);
    Ok(PadDecision {
        label,
        fused_score: score.p_attack,
        strategy: FusionStrategy::ResizeBaseline,
        votes_attack: usize::from(label == PadLabel::Attack),
        votes_total: 1,
    })
}

/// One row of the decision CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub image_id: String,
    pub strategy: FusionStrategy,
    pub fused_score: f64,
    pub label: PadLabel,
}

pub fn write_decisions<W: Write>(out: W, records: &[DecisionRecord]) -> Result<(), FusionError> {
    let io = |e: csv::Error| FusionError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(["image_id", "strategy", "fused_score", "label"])
        .map_err(io)?;
    for r in records {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| FusionError::Io(e.to_string()))
}

/// Reads `image_id,strategy,fused_score,label` rows.
pub fn read_decisions<R: Read>(input: R) -> Result<Vec<DecisionRecord>, FusionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| FusionError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["image_id", "strategy", "fused_score", "label"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(FusionError::Csv {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<DecisionRecord>() {
        let rec = row.map_err(|e| FusionError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&rec.fused_score) {
            return Err(FusionError::Csv {
                line: out.len() as u64 + 2,
                message: format!("fused score {} outside [0, 1]", rec.fused_score),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(ps: &[f64]) -> Vec<StripeScore> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| StripeScore {
                p_attack: p,
                stripe_offset: 4 * i,
            })
            .collect()
    }

    #[test]
    fn simple_majority() {
        let d = majority_vote(&scores(&[0.9, 0.8, 0.2]), 0.5).unwrap();
        assert_eq!(d.label, PadLabel::Attack);
        assert_eq!((d.votes_attack, d.votes_total), (2, 3));
        assert!((d.fused_score - 2.0 / 3.0).abs() < 1e-15);

        let d = majority_vote(&scores(&[0.49, 0.49, 0.49]), 0.5).unwrap();
        assert_eq!((d.label, d.votes_attack), (PadLabel::BonaFide, 0));
    }

    #[test]
    fn votes_beat_magnitude() {
        let mut ps = vec![0.99; 4];
        ps.extend([0.01; 5]);
        assert_eq!(
            majority_vote(&scores(&ps), 0.5).unwrap().label,
            PadLabel::BonaFide
        );
        let m = mean_score(&scores(&ps), 0.5).unwrap();
        assert!((m.fused_score - 0.4456).abs() < 5e-5);
        assert_eq!(m.label, PadLabel::BonaFide);
    }

    #[test]
    fn even_and_empty_rejected() {
        assert!(matches!(
            majority_vote(&scores(&[0.1, 0.9]), 0.5),
            Err(FusionError::EvenCount(2))
        ));
        assert!(matches!(majority_vote(&[], 0.5), Err(FusionError::Empty)));
        assert!(matches!(mean_score(&[], 0.5), Err(FusionError::Empty)));
    }

    #[test]
    fn mean_examples() {
        let d = mean_score(&scores(&[0.9, 0.8, 0.2]), 0.5).unwrap();
        assert!((d.fused_score - 0.633333).abs() < 1e-6);
        assert_eq!(d.label, PadLabel::Attack);
        let d = mean_score(&scores(&[0.5]), 0.5).unwrap();
        assert_eq!((d.fused_score, d.label), (0.5, PadLabel::BonaFide));
    }

    #[test]
    fn decision_csv_round_trip_and_errors() {
        let recs = vec![
            DecisionRecord {
                image_id: "a".into(),
                strategy: FusionStrategy::MajorityVote,
                fused_score: 7.0 / 9.0,
                label: PadLabel::Attack,
            },
            DecisionRecord {
                image_id: "b".into(),
                strategy: FusionStrategy::MeanScore,
                fused_score: 0.125,
                label: PadLabel::BonaFide,
            },
        ];
        let mut buf = Vec::new();
        write_decisions(&mut buf, &recs).unwrap();
        assert!(buf.starts_with(b"image_id,strategy,fused_score,label\n"));
        assert_eq!(read_decisions(buf.as_slice()).unwrap(), recs);

        let bad = "image_id,strategy,fused_score,label\na,majority_vote,1.5,attack\n";
        assert!(read_decisions(bad.as_bytes()).is_err());
        let bad = "image_id,strategy,fused_score,label\na,vote,0.5,attack\n";
        assert!(read_decisions(bad.as_bytes()).is_err());
        let bad = "id,strategy,fused_score,label\n";
        assert!(read_decisions(bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn vote_invariant_under_monotone_rescaling(ps in proptest::collection::vec(0.0f64..1.0, 1..8usize).prop_map(|mut v| { if v.len() % 2 == 0 { v.pop(); } v })) {
            let base = majority_vote(&scores(&ps), 0.5).unwrap();
            // p -> p^3 scaled so that 0.5 stays 0.5: strictly increasing, fixes the threshold
            let g = |p: f64| 0.5 * (2.0 * p).powi(3).clamp(0.0, 1.0);
            let rescaled: Vec<f64> = ps.iter().map(|&p| if p <= 0.5 { g(p) } else { 1.0 - 0.5 * (2.0 * (1.0 - p)).powi(3) }).collect();
            let other = majority_vote(&scores(&rescaled), 0.5).unwrap();
            prop_assert_eq!(base.label, other.label);
            prop_assert!(base.votes_attack <= base.votes_total);
        }

        #[test]
        fn unanimous_votes_agree_with_mean(n in 0usize..4, attack in any::<bool>(), ps in proptest::collection::vec(0.0f64..0.5, 9)) {
            let k = 2 * n + 1;
            let vals: Vec<f64> = ps[..k].iter().map(|&p| if attack { 1.0 - p * 0.99 } else { p }).collect();
            let mv = majority_vote(&scores(&vals), 0.5).unwrap();
            let mean = mean_score(&scores(&vals), 0.5).unwrap();
            prop_assert_eq!(mv.label, mean.label);
        }
    }
}
