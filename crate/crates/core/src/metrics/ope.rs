//! One-pass evaluation: overlap and center-error summaries of a single run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou, BoundingBox};

pub const DEFAULT_PRECISION_THRESHOLD: f64 = 20.0;

/// Number of evenly spaced IoU thresholds in `[0, 1]` for the success curve.
pub const SUCCESS_THRESHOLDS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeReport {
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    pub success_auc: f64,
    pub precision20: f64,
}

fn nonempty(v: &[f64], what: &'static str) -> Result<()> {
    if v.is_empty() {
        Err(Error::Empty(what))
    } else {
        Ok(())
    }
}

pub fn average_overlap(ious: &[f64]) -> Result<f64> {
    nonempty(ious, "IoU list")?;
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Fraction of frames whose IoU is strictly above `threshold`.
pub fn success_rate(ious: &[f64], threshold: f64) -> Result<f64> {
    nonempty(ious, "IoU list")?;
    let hits = ious.iter().filter(|&&v| v > threshold).count();
    Ok(hits as f64 / ious.len() as f64)
}

pub fn success_thresholds() -> impl Iterator<Item = f64> {
    (0..SUCCESS_THRESHOLDS).map(|i| i as f64 / (SUCCESS_THRESHOLDS - 1) as f64)
}

/// Mean success rate over the thresholds `0.00, 0.01, ..., 1.00`.
pub fn success_auc(ious: &[f64]) -> Result<f64> {
    nonempty(ious, "IoU list")?;
    let mut total = 0.0;
    for t in success_thresholds() {
        total += success_rate(ious, t)?;
    }
    Ok(total / SUCCESS_THRESHOLDS as f64)
}

/// Fraction of frames whose center error is strictly below `threshold` pixels.
pub fn precision_at(center_errors: &[f64], threshold: f64) -> Result<f64> {
    nonempty(center_errors, "center error list")?;
    let hits = center_errors.iter().filter(|&&e| e < threshold).count();
    Ok(hits as f64 / center_errors.len() as f64)
}

pub fn frame_ious(pred: &[BoundingBox], gt: &[BoundingBox]) -> Result<Vec<f64>> {
    check_lengths(pred, gt)?;
    pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect()
}

pub fn center_errors(pred: &[BoundingBox], gt: &[BoundingBox]) -> Result<Vec<f64>> {
    check_lengths(pred, gt)?;
    pred.iter().zip(gt).map(|(p, g)| center_distance(p, g)).collect()
}

fn check_lengths(pred: &[BoundingBox], gt: &[BoundingBox]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

impl OpeReport {
    pub fn from_boxes(pred: &[BoundingBox], gt: &[BoundingBox]) -> Result<Self> {
        let ious = frame_ious(pred, gt)?;
        let errors = center_errors(pred, gt)?;
        Ok(Self {
            ao: average_overlap(&ious)?,
            sr50: success_rate(&ious, 0.5)?,
            sr75: success_rate(&ious, 0.75)?,
            success_auc: success_auc(&ious)?,
            precision20: precision_at(&errors, DEFAULT_PRECISION_THRESHOLD)?,
        })
    }
}
