//! Pixel-level segmentation metrics: confusion counts, precision/recall/F,
//! global accuracy, mean IoU, and the dataset-scale (DS) / image-scale (IS)
//! best-F threshold sweeps.

use crate::error::{Error, Result};
use crate::plane::{MaskPlane, ProbabilityPlane};
use serde::{Deserialize, Serialize};

/// Pixel confusion counts with crack as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// Merge counts from another image; the merge is associative, so
    /// per-image counting can run in any grouping.
    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.true_neg += other.true_neg;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Dataset-scale sweep outcome: best F over the grid with counts aggregated
/// across all images per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub ds: f64,
    pub bp: f64,
    pub br: f64,
    pub best_threshold: f64,
    pub rows: Vec<SweepRow>,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub n_images: usize,
    /// Operating threshold used for accuracy and MIOU.
    pub fixed_threshold: f64,
    pub accuracy: f64,
    pub miou: f64,
    pub ds: f64,
    pub is_score: f64,
    pub bp: f64,
    pub br: f64,
    pub best_threshold: f64,
    pub sweep: Vec<SweepRow>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The published threshold grid: m = 0.01, 0.02, ..., 0.99.
pub fn default_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// Threshold a probability plane: pixel is crack iff prob >= m.
pub fn binarize(prob: &ProbabilityPlane, m: f64) -> MaskPlane {
    MaskPlane::from_fn(prob.height(), prob.width(), |r, c| prob.get(r, c) >= m)
}

/// Exact pixel confusion counts between a predicted and ground-truth mask.
pub fn confusion(pred: &MaskPlane, gt: &MaskPlane) -> Result<ConfusionCounts> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &t) in pred.values().iter().zip(gt.values().iter()) {
        match (p, t) {
            (1, 1) => counts.true_pos += 1,
            (0, 0) => counts.true_neg += 1,
            (1, 0) => counts.false_pos += 1,
            (0, 1) => counts.false_neg += 1,
            _ => unreachable!("mask planes are binary by construction"),
        }
    }
    Ok(counts)
}

/// Precision, recall and F-measure with total conventions: an empty
/// prediction set scores P = 1, an empty ground truth scores R = 1, and
/// F = 0 whenever P + R = 0.
pub fn precision_recall_f(counts: &ConfusionCounts) -> (f64, f64, f64) {
    let tp = counts.true_pos as f64;
    let precision = if counts.true_pos + counts.false_pos == 0 {
        1.0
    } else {
        tp / (counts.true_pos + counts.false_pos) as f64
    };
    let recall = if counts.true_pos + counts.false_neg == 0 {
        1.0
    } else {
        tp / (counts.true_pos + counts.false_neg) as f64
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}

/// Global pixel accuracy and two-class mean IoU. A class with an empty
/// union (nothing predicted, nothing in the ground truth) contributes 1.
pub fn accuracy_miou(counts: &ConfusionCounts) -> (f64, f64) {
    let total = counts.total();
    debug_assert!(total > 0, "accuracy over an empty pixel set");
    let accuracy = (counts.true_pos + counts.true_neg) as f64 / total as f64;
    let crack_union = counts.true_pos + counts.false_pos + counts.false_neg;
    let iou_crack = if crack_union == 0 {
        1.0
    } else {
        counts.true_pos as f64 / crack_union as f64
    };
    let non_union = counts.true_neg + counts.false_pos + counts.false_neg;
    let iou_non = if non_union == 0 {
        1.0
    } else {
        counts.true_neg as f64 / non_union as f64
    };
    (accuracy, 0.5 * (iou_crack + iou_non))
}

fn check_aligned(probs: &[ProbabilityPlane], gts: &[MaskPlane]) -> Result<()> {
    if probs.is_empty() || probs.len() != gts.len() {
        return Err(Error::shape(format!(
            "{} probability planes vs {} ground-truth masks",
            probs.len(),
            gts.len()
        )));
    }
    for (i, (p, g)) in probs.iter().zip(gts.iter()).enumerate() {
        if p.height() != g.height() || p.width() != g.width() {
            return Err(Error::shape(format!(
                "image {i}: probability {}x{} vs mask {}x{}",
                p.height(),
                p.width(),
                g.height(),
                g.width()
            )));
        }
    }
    Ok(())
}

/// Dataset-scale best F: for each threshold the confusion counts are summed
/// over all images before P/R/F are formed; the maximum F over the grid is
/// DS, with ties broken toward the smaller threshold.
pub fn dataset_best_f(
    probs: &[ProbabilityPlane],
    gts: &[MaskPlane],
    grid: &[f64],
) -> Result<SweepResult> {
    check_aligned(probs, gts)?;
    if grid.is_empty() {
        return Err(Error::invalid("threshold grid must be nonempty"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &m in grid {
        let mut counts = ConfusionCounts::default();
        for (prob, gt) in probs.iter().zip(gts.iter()) {
            counts.merge(&confusion(&binarize(prob, m), gt)?);
        }
        let (precision, recall, f) = precision_recall_f(&counts);
        rows.push(SweepRow {
            m,
            precision,
            recall,
            f,
        });
    }
    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.f > best.f {
            best = row;
        }
    }
    Ok(SweepResult {
        ds: best.f,
        bp: best.precision,
        br: best.recall,
        best_threshold: best.m,
        rows,
    })
}

/// Image-scale best F: each image takes its own best F over the grid, and
/// the scores are averaged.
pub fn image_best_f(
    probs: &[ProbabilityPlane],
    gts: &[MaskPlane],
    grid: &[f64],
) -> Result<f64> {
    check_aligned(probs, gts)?;
    if grid.is_empty() {
        return Err(Error::invalid("threshold grid must be nonempty"));
    }
    let mut sum = 0.0;
    for (prob, gt) in probs.iter().zip(gts.iter()) {
        let mut best = f64::NEG_INFINITY;
        for &m in grid {
            let (_, _, f) = precision_recall_f(&confusion(&binarize(prob, m), gt)?);
            if f > best {
                best = f;
            }
        }
        sum += best;
    }
    Ok(sum / probs.len() as f64)
}

/// Guided-filter settings for optional prediction refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedParams {
    pub radius: usize,
    pub eps: f64,
}

impl Default for GuidedParams {
    fn default() -> Self {
        GuidedParams {
            radius: 4,
            eps: 1e-3,
        }
    }
}

/// Evaluate a set of probability maps against ground truth: accuracy and
/// MIOU at `fixed_m` (counts aggregated over the dataset), plus the DS/IS
/// threshold sweeps. When `gf` is set, predictions are first refined with a
/// guided filter; the guide defaults to the prediction itself when no guide
/// images are supplied.
pub fn evaluate_dataset(
    probs: &[ProbabilityPlane],
    gts: &[MaskPlane],
    guides: Option<&[ndarray::Array2<f64>]>,
    gf: Option<GuidedParams>,
    fixed_m: f64,
) -> Result<MetricReport> {
    check_aligned(probs, gts)?;
    if !(0.0..1.0).contains(&fixed_m) || fixed_m <= 0.0 {
        return Err(Error::invalid(format!(
            "fixed threshold must lie in (0, 1), got {fixed_m}"
        )));
    }
    if let Some(g) = guides {
        if g.len() != probs.len() {
            return Err(Error::shape(format!(
                "{} guides vs {} probability planes",
                g.len(),
                probs.len()
            )));
        }
    }

    let refined: Vec<ProbabilityPlane> = match gf {
        Some(params) => {
            let mut out = Vec::with_capacity(probs.len());
            for (i, prob) in probs.iter().enumerate() {
                let guide = match guides {
                    Some(g) => g[i].clone(),
                    None => prob.values().clone(),
                };
                out.push(super::guided::guided_filter(
                    prob,
                    &guide,
                    params.radius,
                    params.eps,
                )?);
            }
            out
        }
        None => probs.to_vec(),
    };

    let mut fixed_counts = ConfusionCounts::default();
    for (prob, gt) in refined.iter().zip(gts.iter()) {
        fixed_counts.merge(&confusion(&binarize(prob, fixed_m), gt)?);
    }
    let (accuracy, miou) = accuracy_miou(&fixed_counts);

    let grid = default_grid();
    let sweep = dataset_best_f(&refined, gts, &grid)?;
    let is_score = image_best_f(&refined, gts, &grid)?;

    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_images: probs.len(),
        fixed_threshold: fixed_m,
        accuracy,
        miou,
        ds: sweep.ds,
        is_score,
        bp: sweep.bp,
        br: sweep.br,
        best_threshold: sweep.best_threshold,
        sweep: sweep.rows,
    })
}

/// Write a sweep as CSV with columns `m,precision,recall,f`.
pub fn write_sweep_csv(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    use std::io::Write;
    let mut out = String::from("m,precision,recall,f\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.m, row.precision, row.recall, row.f
        ));
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Write a report as pretty JSON.
pub fn write_report_json(path: &std::path::Path, report: &MetricReport) -> Result<()> {
    let body = serde_json::to_string_pretty(report)?;
    std::fs::write(path, body.as_bytes()).map_err(|e| Error::io(path, e))
}
