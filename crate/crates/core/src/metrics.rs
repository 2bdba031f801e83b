//! Biometric error rates for liveness scores.
//!
//! A sample is judged real iff `score ≥ α`. With `N_S` spoofed and `N_R`
//! real samples:
//!
//! - `FAR(α) = N_SJR / N_S`, spoofed samples judged real;
//! - `MDR(α) = N_RJS / N_R`, real samples judged spoofed;
//! - `HTER(α) = (FAR(α) + MDR(α)) / 2`;
//! - the EER is taken at the swept threshold where FAR and MDR are closest.
//!
//! Some literature names FAR the "false rejection rate" and MDR the "false
//! acceptance rate"; the definitions above are what is computed regardless
//! of naming.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::manifest::{Label, SampleManifest};
use crate::error::{Error, Result};

/// Offset above the top of the score range for the "reject all" threshold.
pub const ABOVE_RANGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    /// Liveness score in `[0,1]`; higher means more likely real.
    pub score: f64,
    pub label: Label,
}

impl ScoreRecord {
    pub fn new(id: impl Into<String>, score: f64, label: Label) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreFile(format!("score {score} outside [0,1]")));
        }
        Ok(Self {
            id: id.into(),
            score,
            label,
        })
    }
}

/// Error counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_real: usize,
    pub n_spoof: usize,
    pub spoof_judged_real: usize,
    pub real_judged_spoof: usize,
}

impl Counts {
    pub fn at(records: &[ScoreRecord], alpha: f64) -> Self {
        let mut c = Counts {
            n_real: 0,
            n_spoof: 0,
            spoof_judged_real: 0,
            real_judged_spoof: 0,
        };
        for r in records {
            let judged_real = r.score >= alpha;
            match r.label {
                Label::Real => {
                    c.n_real += 1;
                    c.real_judged_spoof += usize::from(!judged_real);
                }
                Label::Attack => {
                    c.n_spoof += 1;
                    c.spoof_judged_real += usize::from(judged_real);
                }
            }
        }
        c
    }

    pub fn far(&self) -> Result<f64> {
        if self.n_spoof == 0 {
            return Err(Error::UndefinedMetric("FAR needs at least one attack sample".into()));
        }
        Ok(self.spoof_judged_real as f64 / self.n_spoof as f64)
    }

    pub fn mdr(&self) -> Result<f64> {
        if self.n_real == 0 {
            return Err(Error::UndefinedMetric("MDR needs at least one real sample".into()));
        }
        Ok(self.real_judged_spoof as f64 / self.n_real as f64)
    }

    pub fn hter(&self) -> Result<f64> {
        Ok((self.far()? + self.mdr()?) / 2.0)
    }
}

pub fn far(records: &[ScoreRecord], alpha: f64) -> Result<f64> {
    Counts::at(records, alpha).far()
}

pub fn mdr(records: &[ScoreRecord], alpha: f64) -> Result<f64> {
    Counts::at(records, alpha).mdr()
}

pub fn hter(records: &[ScoreRecord], alpha: f64) -> Result<f64> {
    Counts::at(records, alpha).hter()
}

fn require_both_classes(records: &[ScoreRecord]) -> Result<()> {
    let real = records.iter().any(|r| r.label == Label::Real);
    let attack = records.iter().any(|r| r.label == Label::Attack);
    if real && attack {
        Ok(())
    } else {
        Err(Error::UndefinedMetric(
            "error rates need both real and attack samples".into(),
        ))
    }
}

fn sorted_scores(records: &[ScoreRecord]) -> Vec<f64> {
    let mut s: Vec<f64> = records.iter().map(|r| r.score).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Every threshold the EER search considers, ascending: each distinct score,
/// the midpoint of each pair of adjacent distinct scores, `0`, and
/// `1 + ABOVE_RANGE_EPS`.
pub fn candidate_thresholds(records: &[ScoreRecord]) -> Vec<f64> {
    let mut distinct = sorted_scores(records);
    distinct.dedup();
    let mut out = Vec::with_capacity(2 * distinct.len() + 2);
    out.push(0.0);
    out.extend(&distinct);
    out.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.push(1.0 + ABOVE_RANGE_EPS);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Equal error rate and its threshold `(eer, α*)`.
///
/// `α*` minimizes `|FAR − MDR|` over [`candidate_thresholds`]; ties go to the
/// smaller `FAR + MDR`, then to the smaller `α`. The returned rate is
/// `(FAR(α*) + MDR(α*)) / 2`, i.e. exactly `hter(records, α*)`.
pub fn eer(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    require_both_classes(records)?;
    let mut reals: Vec<f64> = records
        .iter()
        .filter(|r| r.label == Label::Real)
        .map(|r| r.score)
        .collect();
    let mut spoofs: Vec<f64> = records
        .iter()
        .filter(|r| r.label == Label::Attack)
        .map(|r| r.score)
        .collect();
    reals.sort_by(f64::total_cmp);
    spoofs.sort_by(f64::total_cmp);
    let (nr, ns) = (reals.len() as u128, spoofs.len() as u128);

    let mut best: Option<((u128, u128), f64, Counts)> = None;
    for alpha in candidate_thresholds(records) {
        let below_real = reals.partition_point(|&s| s < alpha);
        let below_spoof = spoofs.partition_point(|&s| s < alpha);
        let counts = Counts {
            n_real: reals.len(),
            n_spoof: spoofs.len(),
            spoof_judged_real: spoofs.len() - below_spoof,
            real_judged_spoof: below_real,
        };
        // FAR and MDR over the common denominator N_S·N_R, compared exactly
        let far_num = counts.spoof_judged_real as u128 * nr;
        let mdr_num = counts.real_judged_spoof as u128 * ns;
        let key = (far_num.abs_diff(mdr_num), far_num + mdr_num);
        if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
            best = Some((key, alpha, counts));
        }
    }
    let (_, alpha, counts) = best.expect("candidate list is never empty");
    Ok((counts.hter()?, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub mdr: f64,
}

/// `n_points` evenly spaced thresholds from the lowest to the highest score
/// inclusive, with FAR and MDR at each.
pub fn det_curve(records: &[ScoreRecord], n_points: usize) -> Result<Vec<DetPoint>> {
    require_both_classes(records)?;
    if n_points < 2 {
        return Err(Error::Contract(format!(
            "DET curve needs at least 2 points, got {n_points}"
        )));
    }
    let sorted = sorted_scores(records);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    (0..n_points)
        .map(|i| {
            let threshold = if i + 1 == n_points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n_points - 1) as f64
            };
            let c = Counts::at(records, threshold);
            Ok(DetPoint {
                threshold,
                far: c.far()?,
                mdr: c.mdr()?,
            })
        })
        .collect()
}

/// One record per video: mean frame score, majority label (first label on a
/// tie), in order of first appearance. The record id becomes the video id.
pub fn aggregate_by_video(records: &[ScoreRecord], manifest: &SampleManifest) -> Result<Vec<ScoreRecord>> {
    let by_path: HashMap<&str, &str> = manifest
        .entries()
        .iter()
        .map(|e| (e.path.as_str(), e.video_id.as_str()))
        .collect();
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&ScoreRecord>> = HashMap::new();
    for r in records {
        let video = by_path
            .get(r.id.as_str())
            .ok_or_else(|| Error::ScoreFile(format!("sample id {} not found in manifest", r.id)))?;
        groups
            .entry(video)
            .or_insert_with(|| {
                order.push(video);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|video| {
            let frames = &groups[video];
            let mean = frames.iter().map(|r| r.score).sum::<f64>() / frames.len() as f64;
            let reals = frames.iter().filter(|r| r.label == Label::Real).count();
            let attacks = frames.len() - reals;
            let label = match reals.cmp(&attacks) {
                std::cmp::Ordering::Greater => Label::Real,
                std::cmp::Ordering::Less => Label::Attack,
                std::cmp::Ordering::Equal => frames[0].label,
            };
            Ok(ScoreRecord {
                id: video.to_string(),
                score: mean.clamp(0.0, 1.0),
                label,
            })
        })
        .collect()
}

/// Everything reported for one scored split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub threshold: f64,
    pub hter: f64,
    pub det: Vec<DetPoint>,
    pub counts: Counts,
}

pub const DEFAULT_DET_POINTS: usize = 101;

pub fn evaluate(records: &[ScoreRecord], det_points: usize) -> Result<EvalReport> {
    let (eer_value, threshold) = eer(records)?;
    let counts = Counts::at(records, threshold);
    Ok(EvalReport {
        eer: eer_value,
        threshold,
        hter: counts.hter()?,
        det: det_curve(records, det_points)?,
        counts,
    })
}

/// A rate as a percentage with two decimals, e.g. `0.0171 → "1.71"`.
pub fn percent(rate: f64) -> String {
    format!("{:.2}", rate * 100.0)
}

pub const SCORE_HEADER: &str = "id,score,label";

/// Score file text: header `id,score,label`, one row per record, scores in
/// shortest round-trip decimal form.
pub fn scores_to_csv(records: &[ScoreRecord]) -> String {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.id, r.score, r.label);
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::ScoreFile(e.to_string()))?;
    if !header.iter().eq(SCORE_HEADER.split(',')) {
        return Err(Error::ScoreFile(format!("header must be '{SCORE_HEADER}'")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::ScoreFile(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::ScoreFile(format!("line {line}: {msg}"));
        let score: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("invalid score '{}'", &rec[1])))?;
        let label: Label = rec[2].parse().map_err(bad)?;
        out.push(ScoreRecord::new(&rec[0], score, label).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    std::fs::write(path, scores_to_csv(records)).map_err(|e| Error::io(path, e))
}

/// EER table with a Development and/or Test column:
///
/// ```text
/// Feature  Model  EER Development  EER Test
/// Raw RGB  AAViT             1.87      1.71
/// ```
pub fn eval_table(model: &str, dev: Option<f64>, test: Option<f64>) -> String {
    let mut header = format!("{:<9}{:<21}", "Feature", "Model");
    let mut row = format!("{:<9}{:<21}", "Raw RGB", model);
    let mut summary = Vec::new();
    for (name, v) in [("Development", dev), ("Test", test)] {
        if let Some(v) = v {
            let col = format!("EER {name}");
            let _ = write!(header, "{col:>17}");
            let _ = write!(row, "{:>17}", percent(v));
            summary.push(percent(v));
        }
    }
    format!(
        "{}\n{}\nEER (%): {}\n",
        header.trim_end(),
        row.trim_end(),
        summary.join(" / ")
    )
}

/// Head-variant comparison table, one row per `(model label, test EER)`.
pub fn ablation_table(rows: &[(&str, f64)]) -> String {
    let mut out = format!("{:<9}{:<21}{:>6}\n", "Feature", "Model", "EER");
    for (i, (label, eer)) in rows.iter().enumerate() {
        let feature = if i == 0 { "Raw RGB" } else { "" };
        let _ = writeln!(out, "{feature:<9}{label:<21}{:>6}", percent(*eer));
    }
    out
}
