//! ISO/IEC 30107-3 style error rates.
//!
//! All rates are percentages. APCER is measured over attack presentations
//! only and BPCER over bona fide presentations only. At a threshold `t` a
//! sample is classified as attack iff `score > t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::PadLabel;

/// Fixed-APCER operating points reported by default (percent).
pub const DEFAULT_APCER_TARGETS: [f64; 2] = [0.1, 1.0];

pub const REPORT_FORMAT_VERSION: u32 = 1;

// Slack for comparing percentages computed from integer counts.
const RATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("evaluation set has no {0} samples")]
    MissingClass(PadLabel),
    #[error("sample {0} has no decision")]
    MissingDecision(String),
    #[error("sample {id} has score {score} outside [0, 1]")]
    InvalidScore { id: String, score: f64 },
    #[error("cannot average an empty list of reports")]
    NoReports,
    #[error("write failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub image_id: String,
    pub truth: PadLabel,
    pub score: f64,
    pub decision: Option<PadLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub ccr: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub hter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize), MetricsError> {
    let attacks = samples
        .iter()
        .filter(|s| s.truth == PadLabel::Attack)
        .count();
    let bona = samples.len() - attacks;
    if attacks == 0 {
        return Err(MetricsError::MissingClass(PadLabel::Attack));
    }
    if bona == 0 {
        return Err(MetricsError::MissingClass(PadLabel::BonaFide));
    }
    Ok((attacks, bona))
}

fn check_scores(samples: &[ScoredSample]) -> Result<(), MetricsError> {
    match samples.iter().find(|s| !(0.0..=1.0).contains(&s.score)) {
        Some(s) => Err(MetricsError::InvalidScore {
            id: s.image_id.clone(),
            score: s.score,
        }),
        None => Ok(()),
    }
}

#[inline]
fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

pub fn rates_at_decisions(samples: &[ScoredSample]) -> Result<Rates, MetricsError> {
    let (attacks, bona) = class_counts(samples)?;
    let mut missed_attacks = 0;
    let mut rejected_bona = 0;
    for s in samples {
        let d = s
            .decision
            .ok_or_else(|| MetricsError::MissingDecision(s.image_id.clone()))?;
        match (s.truth, d) {
            (PadLabel::Attack, PadLabel::BonaFide) => missed_attacks += 1,
            (PadLabel::BonaFide, PadLabel::Attack) => rejected_bona += 1,
            _ => {}
        }
    }
    let apcer = pct(missed_attacks, attacks);
    let bpcer = pct(rejected_bona, bona);
    Ok(Rates {
        ccr: pct(
            samples.len() - missed_attacks - rejected_bona,
            samples.len(),
        ),
        apcer,
        bpcer,
        hter: (apcer + bpcer) / 2.0,
    })
}

/// Operating points at `-inf`, every distinct score in ascending order, and `+inf`.
pub fn operating_points(samples: &[ScoredSample]) -> Result<Vec<OperatingPoint>, MetricsError> {
    let (n_attack, n_bona) = class_counts(samples)?;
    check_scores(samples)?;
    let mut attack: Vec<f64> = Vec::with_capacity(n_attack);
    let mut bona: Vec<f64> = Vec::with_capacity(n_bona);
    for s in samples {
        match s.truth {
            PadLabel::Attack => attack.push(s.score),
            PadLabel::BonaFide => bona.push(s.score),
        }
    }
    attack.sort_by(f64::total_cmp);
    bona.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = attack.iter().chain(&bona).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(OperatingPoint {
        threshold: f64::NEG_INFINITY,
        apcer: 0.0,
        bpcer: 100.0,
    });
    // counts of samples with score <= t
    let (mut ia, mut ib) = (0, 0);
    for &t in &thresholds {
        while ia < attack.len() && attack[ia] <= t {
            ia += 1;
        }
        while ib < bona.len() && bona[ib] <= t {
            ib += 1;
        }
        points.push(OperatingPoint {
            threshold: t,
            apcer: pct(ia, n_attack),
            bpcer: pct(n_bona - ib, n_bona),
        });
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        apcer: 100.0,
        bpcer: 0.0,
    });
    Ok(points)
}

/// Linear interpolation between the operating points where `apcer - bpcer`
/// changes sign. Returns `(eer, threshold)`; when one neighbor is a sentinel
/// the finite neighbor's threshold is reported.
pub fn eer(samples: &[ScoredSample]) -> Result<(f64, f64), MetricsError> {
    let points = operating_points(samples)?;
    Ok(eer_from_points(&points))
}

pub(crate) fn eer_from_points(points: &[OperatingPoint]) -> (f64, f64) {
    let diff = |p: &OperatingPoint| p.apcer - p.bpcer;
    let j = points
        .iter()
        .position(|p| diff(p) >= 0.0)
        .expect("the +inf point always has apcer >= bpcer");
    let hi = points[j];
    if diff(&hi) == 0.0 || j == 0 {
        return (hi.apcer, hi.threshold);
    }
    let lo = points[j - 1];
    let alpha = -diff(&lo) / (diff(&hi) - diff(&lo));
    let rate = lo.apcer + alpha * (hi.apcer - lo.apcer);
    let threshold = match (lo.threshold.is_finite(), hi.threshold.is_finite()) {
        (true, true) => lo.threshold + alpha * (hi.threshold - lo.threshold),
        (false, _) => hi.threshold,
        (true, false) => lo.threshold,
    };
    (rate, threshold)
}

/// BPCER at the most permissive threshold whose APCER does not exceed
/// `target_apcer`. Falls back to rejecting every presentation.
pub fn bpcer_at_apcer(samples: &[ScoredSample], target_apcer: f64) -> Result<f64, MetricsError> {
    let points = operating_points(samples)?;
    Ok(bpcer_at_apcer_from_points(&points, target_apcer))
}

pub(crate) fn bpcer_at_apcer_from_points(points: &[OperatingPoint], target: f64) -> f64 {
    points
        .iter()
        .take_while(|p| p.apcer <= target + RATE_EPS)
        .last()
        .map_or(100.0, |p| p.bpcer)
}

/// Key used for fixed-APCER entries, e.g. `"0.1"` and `"1"`.
pub fn apcer_key(target: f64) -> String {
    format!("{target}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub ccr: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub hter: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    /// BPCER at fixed APCER targets, keyed by the target percentage.
    pub bpcer_at_apcer: BTreeMap<String, f64>,
    pub bona_fide_count: usize,
    pub attack_count: usize,
}

pub fn evaluate(
    samples: &[ScoredSample],
    apcer_targets: &[f64],
) -> Result<EvalReport, MetricsError> {
    let rates = rates_at_decisions(samples)?;
    let points = operating_points(samples)?;
    let (eer, eer_threshold) = eer_from_points(&points);
    let bpcer_at_apcer = apcer_targets
        .iter()
        .map(|&t| (apcer_key(t), bpcer_at_apcer_from_points(&points, t)))
        .collect();
    let (attack_count, bona_fide_count) = class_counts(samples)?;
    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        ccr: rates.ccr,
        apcer: rates.apcer,
        bpcer: rates.bpcer,
        hter: rates.hter,
        eer,
        eer_threshold,
        bpcer_at_apcer,
        bona_fide_count,
        attack_count,
    })
}

impl EvalReport {
    /// Element-wise arithmetic mean. Counts are taken from the first report.
    pub fn mean(reports: &[EvalReport]) -> Result<EvalReport, MetricsError> {
        let first = reports.first().ok_or(MetricsError::NoReports)?;
        let n = reports.len() as f64;
        let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let bpcer_at_apcer = first
            .bpcer_at_apcer
            .keys()
            .map(|k| {
                let sum: f64 = reports
                    .iter()
                    .map(|r| r.bpcer_at_apcer.get(k).copied().unwrap_or(f64::NAN))
                    .sum();
                (k.clone(), sum / n)
            })
            .collect();
        Ok(EvalReport {
            format_version: REPORT_FORMAT_VERSION,
            ccr: avg(|r| r.ccr),
            apcer: avg(|r| r.apcer),
            bpcer: avg(|r| r.bpcer),
            hter: avg(|r| r.hter),
            eer: avg(|r| r.eer),
            eer_threshold: avg(|r| r.eer_threshold),
            bpcer_at_apcer,
            bona_fide_count: first.bona_fide_count,
            attack_count: first.attack_count,
        })
    }

    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("CCR (%)".into(), format!("{:.2}", self.ccr)),
            ("APCER (%)".into(), format!("{:.2}", self.apcer)),
            ("BPCER (%)".into(), format!("{:.2}", self.bpcer)),
            ("HTER (%)".into(), format!("{:.2}", self.hter)),
            ("EER (%)".into(), format!("{:.2}", self.eer)),
            ("EER threshold".into(), format!("{:.4}", self.eer_threshold)),
        ];
        for (k, v) in &self.bpcer_at_apcer {
            rows.push((format!("BPCER @ APCER {k}% (%)"), format!("{v:.2}")));
        }
        rows.push(("bona fide samples".into(), self.bona_fide_count.to_string()));
        rows.push(("attack samples".into(), self.attack_count.to_string()));
        let kw = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let vw = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<kw$}  {v:>vw$}");
        }
        out
    }
}

/// Writes `threshold,apcer,bpcer` rows for external DET plotting.
pub fn write_det<W: std::io::Write>(points: &[OperatingPoint], out: W) -> Result<(), MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(e.to_string());
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "threshold,apcer,bpcer").map_err(io)?;
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.apcer, p.bpcer).map_err(io)?;
    }
    std::io::Write::flush(&mut out).map_err(io)
}

/// Rounds to two decimals, halves away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
