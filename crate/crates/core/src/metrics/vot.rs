//! Anchor-based short-term evaluation.
//!
//! The tracker is (re)initialized at anchor frames `0, s, 2s, ...` and run
//! forward to the end of the sequence. A run fails at the first frame of the
//! earliest stretch of `fail_window` consecutive frames with IoU below
//! `fail_iou`. Per anchor:
//!
//! * robustness = frames tracked before failure / subsequence length
//! * accuracy = mean IoU over the frames before failure
//! * eao = sum of pre-failure IoUs / subsequence length
//!
//! and the report averages each over anchors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::metrics::ope::frame_ious;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotProtocolConfig {
    pub anchor_spacing: usize,
    pub fail_iou: f64,
    pub fail_window: usize,
}

impl Default for VotProtocolConfig {
    fn default() -> Self {
        Self {
            anchor_spacing: 50,
            fail_iou: 0.1,
            fail_window: 10,
        }
    }
}

impl VotProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchor_spacing == 0 {
            return Err(Error::Config("vot.anchor_spacing must be at least 1".into()));
        }
        if self.fail_window == 0 {
            return Err(Error::Config("vot.fail_window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.fail_iou) {
            return Err(Error::Config("vot.fail_iou must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Anchor frames for a sequence of `len` frames.
    pub fn anchors(&self, len: usize) -> Vec<usize> {
        (0..len).step_by(self.anchor_spacing.max(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotReport {
    pub eao: f64,
    pub accuracy: f64,
    pub robustness: f64,
    pub anchors_used: usize,
}

/// Index of the first frame of the earliest run of `window` consecutive
/// IoUs below `threshold`.
pub fn failure_frame(ious: &[f64], threshold: f64, window: usize) -> Option<usize> {
    let mut run = 0;
    for (i, &v) in ious.iter().enumerate() {
        if v < threshold {
            run += 1;
            if run == window {
                return Some(i + 1 - window);
            }
        } else {
            run = 0;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorScore {
    pub robustness: f64,
    pub accuracy: f64,
    pub eao: f64,
}

pub fn score_anchor(ious: &[f64], cfg: &VotProtocolConfig) -> Result<AnchorScore> {
    if ious.is_empty() {
        return Err(Error::Empty("anchor run"));
    }
    let len = ious.len() as f64;
    let tracked = failure_frame(ious, cfg.fail_iou, cfg.fail_window).unwrap_or(ious.len());
    let kept: f64 = ious[..tracked].iter().sum();
    Ok(AnchorScore {
        robustness: tracked as f64 / len,
        accuracy: if tracked == 0 { 0.0 } else { kept / tracked as f64 },
        eao: kept / len,
    })
}

/// `pred_runs[i]` holds the boxes predicted from anchor `i` to the last frame.
pub fn vot_anchor_eval(
    pred_runs: &[Vec<BoundingBox>],
    gt: &[BoundingBox],
    cfg: &VotProtocolConfig,
) -> Result<VotReport> {
    cfg.validate()?;
    let anchors = cfg.anchors(gt.len());
    if anchors.is_empty() {
        return Err(Error::Empty("ground truth"));
    }
    if pred_runs.len() != anchors.len() {
        return Err(Error::Config(format!(
            "{} prediction runs for {} anchors",
            pred_runs.len(),
            anchors.len()
        )));
    }
    let (mut eao, mut acc, mut rob) = (0.0, 0.0, 0.0);
    for (&a, run) in anchors.iter().zip(pred_runs) {
        let ious = frame_ious(run, &gt[a..])?;
        let s = score_anchor(&ious, cfg)?;
        eao += s.eao;
        acc += s.accuracy;
        rob += s.robustness;
    }
    let n = anchors.len() as f64;
    Ok(VotReport {
        eao: eao / n,
        accuracy: acc / n,
        robustness: rob / n,
        anchors_used: anchors.len(),
    })
}
