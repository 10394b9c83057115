//! Tracking a sequence under an attack, and per-sequence evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    abbg_attack_frame, random_noise_frame, untargeted_pgd_baseline, AttackConfig, FrameAttack,
    Perturbation,
};
use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, BoxGenConfig};
use crate::metrics::perturb::ssim_gray;
use crate::metrics::{vot_anchor_eval, OpeReport, PerturbReport, VotProtocolConfig, VotReport};
use crate::tracker::{BoxPrediction, TrackerConfig, TrackerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Abbg,
    Random,
    UntargetedPgd,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Abbg => "abbg",
            AttackKind::Random => "random",
            AttackKind::UntargetedPgd => "untargeted_pgd",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "abbg" => Ok(AttackKind::Abbg),
            "random" => Ok(AttackKind::Random),
            "untargeted_pgd" => Ok(AttackKind::UntargetedPgd),
            other => Err(Error::Config(format!("unknown attack '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Ope,
    Vot,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ope" => Ok(Protocol::Ope),
            "vot" => Ok(Protocol::Vot),
            other => Err(Error::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub attack: AttackKind,
    pub attack_params: AttackConfig,
    pub boxgen_params: BoxGenConfig,
    pub tracker_params: TrackerConfig,
    pub vot_params: VotProtocolConfig,
    pub protocol: Protocol,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            attack: AttackKind::Abbg,
            attack_params: AttackConfig::default(),
            boxgen_params: BoxGenConfig::default(),
            tracker_params: TrackerConfig::default(),
            vot_params: VotProtocolConfig::default(),
            protocol: Protocol::Vot,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.attack_params.validate()?;
        self.boxgen_params.validate()?;
        self.tracker_params.validate()?;
        self.vot_params.validate()
    }
}

/// What happened on one tracked (non-initialization) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub bbox: BoundingBox,
    pub delta_linf: f64,
    pub delta_l1_mean: f64,
    /// SSIM (percent) between the clean and the attacked search window.
    pub ssim_percent: f64,
    /// Smallest and largest pixel value the tracker was given.
    pub input_min: f64,
    pub input_max: f64,
}

/// A run from an initialization frame to the end of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub start: usize,
    /// One box per frame from `start`; the first is the initialization box.
    pub boxes: Vec<BoundingBox>,
    /// One record per frame after `start`.
    pub frames: Vec<FrameRecord>,
}

fn attack_step<R: Rng + ?Sized>(
    tracker: &TrackerState,
    frame: &crate::image::Image,
    cfg: &RunConfig,
    rng: &mut R,
    carried: Option<&Perturbation>,
) -> Result<FrameAttack<BoxPrediction>> {
    let acfg = &cfg.attack_params;
    match cfg.attack {
        AttackKind::None => {
            let quiet = AttackConfig {
                epsilon: 0.0,
                ..acfg.clone()
            };
            random_noise_frame(tracker, frame, &quiet, rng)
        }
        AttackKind::Abbg => {
            let incoming = if acfg.carry_over { carried } else { None };
            abbg_attack_frame(tracker, frame, acfg, &cfg.boxgen_params, rng, incoming)
        }
        AttackKind::Random => random_noise_frame(tracker, frame, acfg, rng),
        AttackKind::UntargetedPgd => untargeted_pgd_baseline(tracker, frame, acfg, rng),
    }
}

/// Initializes on `seq.gt[start]` and tracks to the last frame, feeding the
/// attacked prediction back into the tracker state.
pub fn track_from<R: Rng + ?Sized>(
    seq: &Sequence,
    start: usize,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<TrackRun> {
    if start >= seq.len() {
        return Err(Error::Config(format!(
            "start frame {start} is past the end of {} ({} frames)",
            seq.name,
            seq.len()
        )));
    }
    let mut tracker =
        TrackerState::init(&seq.frames[start], &seq.gt[start], cfg.tracker_params.clone())?;
    let mut boxes = vec![seq.gt[start]];
    let mut frames = Vec::with_capacity(seq.len() - start - 1);
    let mut carried: Option<Perturbation> = None;
    for (offset, frame) in seq.frames[start + 1..].iter().enumerate() {
        let at = |e: Error| Error::AtFrame {
            sequence: seq.name.clone(),
            frame: start + offset + 2,
            source: Box::new(e),
        };
        let step = attack_step(&tracker, frame, cfg, rng, carried.as_ref()).map_err(at)?;
        let bbox = step.report.attacked_box;
        let ssim_percent = if step.perturbation.linf() == 0.0 {
            100.0
        } else {
            ssim_gray(step.clean_window.pixels.view(), step.attacked_window.pixels.view())
                .map_err(at)?
        };
        let px = &step.attacked_window.pixels;
        frames.push(FrameRecord {
            bbox,
            delta_linf: step.perturbation.linf(),
            delta_l1_mean: step.perturbation.l1_mean(),
            ssim_percent,
            input_min: px.iter().copied().fold(f64::INFINITY, f64::min),
            input_max: px.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        boxes.push(bbox);
        tracker = tracker.update(&bbox).map_err(at)?;
        carried = Some(step.perturbation);
    }
    Ok(TrackRun {
        start,
        boxes,
        frames,
    })
}

/// Per-sequence evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub name: String,
    pub ope: OpeReport,
    pub vot: Option<VotReport>,
    pub perturbation: PerturbReport,
    /// Largest `|delta|` over all attacked frames of all runs.
    pub max_delta_linf: f64,
    /// Pixel range seen by the tracker over all runs.
    pub input_range: (f64, f64),
    /// Boxes of the run initialized on the first frame.
    #[serde(skip)]
    pub boxes: Vec<BoundingBox>,
}

/// Runs the configured attack on one sequence. The run initialized on frame
/// 0 gives the one-pass scores (the initialization frame is not scored) and
/// the perturbation statistics; with [`Protocol::Vot`] it is also the first
/// anchor run.
pub fn evaluate_sequence<R: Rng + ?Sized>(
    seq: &Sequence,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<SequenceResult> {
    cfg.validate()?;
    seq.validate()?;
    let first = track_from(seq, 0, cfg, rng)?;
    let ope = OpeReport::from_boxes(&first.boxes[1..], &seq.gt[1..])?;
    let n = first.frames.len() as f64;
    let perturbation = PerturbReport {
        l1_mean: first.frames.iter().map(|f| f.delta_l1_mean).sum::<f64>() / n,
        ssim_percent: first.frames.iter().map(|f| f.ssim_percent).sum::<f64>() / n,
    };
    let mut runs = vec![first];
    let vot = match cfg.protocol {
        Protocol::Ope => None,
        Protocol::Vot => {
            for &a in cfg.vot_params.anchors(seq.len()).iter().skip(1) {
                runs.push(track_from(seq, a, cfg, rng)?);
            }
            let boxes: Vec<_> = runs.iter().map(|r| r.boxes.clone()).collect();
            Some(vot_anchor_eval(&boxes, &seq.gt, &cfg.vot_params)?)
        }
    };
    let records = runs.iter().flat_map(|r| r.frames.iter());
    let mut max_delta_linf: f64 = 0.0;
    let mut input_range = (f64::INFINITY, f64::NEG_INFINITY);
    for f in records {
        max_delta_linf = max_delta_linf.max(f.delta_linf);
        input_range.0 = input_range.0.min(f.input_min);
        input_range.1 = input_range.1.max(f.input_max);
    }
    Ok(SequenceResult {
        name: seq.name.clone(),
        ope,
        vot,
        perturbation,
        max_delta_linf,
        input_range,
        boxes: runs.swap_remove(0).boxes,
    })
}
