//! Randomized finite-difference checks of a tracker's pullback.
//!
//! A state is a two-level textured object on a two-level background: the
//! tracker is initialized on one frame and asked to follow the object after a
//! random shift with additive noise. High-contrast textures keep the
//! central-difference truncation error far below the tolerance on almost all
//! pixels. Nearly flat patches are avoided because there the normalization in
//! the correlation is curved enough at step 0.5 that the oracle itself becomes
//! the weak link.
//!
//! A pixel whose analytic derivative happens to cancel to almost zero can
//! still exceed the relative tolerance through truncation alone (roughly one
//! pixel in a couple of thousand), so a run with many probes occasionally
//! reports a failure that shrinks with the step.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::Image;
use crate::tracker::{
    finite_diff_check, BoxCotangent, DifferentiableTracker, SearchWindow, TrackerConfig,
    TrackerOutput, TrackerState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub states: usize,
    pub probes: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Template side lengths are drawn from this inclusive range.
    pub template_side: (usize, usize),
    /// Standard deviation of the noise added to the tracked frame.
    pub noise_sigma: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            states: 5,
            probes: 100,
            step: 0.5,
            tolerance: 1e-3,
            template_side: (8, 16),
            noise_sigma: 8.0,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(Error::Config("gradcheck.states must be at least 1".into()));
        }
        if self.probes == 0 {
            return Err(Error::Config("gradcheck.probes must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config("gradcheck.step must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("gradcheck.tolerance must be positive".into()));
        }
        let (lo, hi) = self.template_side;
        if lo < 4 || hi < lo {
            return Err(Error::Config(
                "gradcheck.template_side must satisfy 4 <= min <= max".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("gradcheck.noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// One randomized check input.
#[derive(Debug, Clone)]
pub struct GradcheckState {
    pub tracker: TrackerState,
    pub window: SearchWindow,
    pub cotangent: BoxCotangent,
}

/// Two-level texture: every pixel sits far from the patch mean.
fn texel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        TEXEL_LOW
    } else {
        TEXEL_HIGH
    }
}

const TEXEL_LOW: f64 = 20.0;
const TEXEL_HIGH: f64 = 235.0;

pub fn random_state<R: Rng + ?Sized>(
    cfg: &GradcheckConfig,
    tracker_cfg: &TrackerConfig,
    rng: &mut R,
) -> Result<GradcheckState> {
    cfg.validate()?;
    let (lo, hi) = cfg.template_side;
    let rows = rng.random_range(lo..=hi);
    let cols = rng.random_range(lo..=hi);
    // Frame large enough that the window never needs replication.
    let (fh, fw) = (5 * rows, 5 * cols);
    let object = Array2::from_shape_simple_fn((rows, cols), || texel(rng));
    let paint = |top: usize, left: usize, rng: &mut R| {
        let mut px = Array2::from_shape_simple_fn((fh, fw), || texel(rng));
        px.slice_mut(ndarray::s![top..top + rows, left..left + cols])
            .assign(&object);
        px
    };
    let (top, left) = (2 * rows, 2 * cols);
    let first = Image::from_gray(paint(top, left, rng));
    let gt = BoundingBox::new(left as f64, top as f64, cols as f64, rows as f64)?;
    let tracker = TrackerState::init(&first, &gt, tracker_cfg.clone())?;

    let dy = rng.random_range(0..=rows / 2) as i64 - (rows / 4) as i64;
    let dx = rng.random_range(0..=cols / 2) as i64 - (cols / 4) as i64;
    let mut second = paint((top as i64 + dy) as usize, (left as i64 + dx) as usize, rng);
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        second.mapv_inplace(|v| (v + noise.sample(rng)).clamp(0.0, 255.0));
    }
    let window = tracker.crop_window(&Image::from_gray(second));
    let cotangent = [
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
    ];
    Ok(GradcheckState {
        tracker,
        window,
        cotangent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub per_state: Vec<f64>,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Negative control: a tracker whose pullback is off by a constant factor.
#[derive(Debug, Clone)]
pub struct CorruptedBackward<T> {
    pub inner: T,
    pub scale: f64,
}

impl<T: DifferentiableTracker> DifferentiableTracker for CorruptedBackward<T> {
    type Prediction = T::Prediction;

    fn window_shape(&self) -> (usize, usize) {
        self.inner.window_shape()
    }

    fn crop_window(&self, frame: &Image) -> SearchWindow {
        self.inner.crop_window(frame)
    }

    fn predict(&self, window: &SearchWindow) -> Result<Self::Prediction> {
        self.inner.predict(window)
    }

    fn pullback(&self, prediction: &Self::Prediction, cotangent: BoxCotangent) -> Result<Array2<f64>> {
        Ok(self.inner.pullback(prediction, cotangent)? * self.scale)
    }
}

fn check_state<T: DifferentiableTracker, R: Rng + ?Sized>(
    tracker: &T,
    state: &GradcheckState,
    cfg: &GradcheckConfig,
    rng: &mut R,
) -> Result<f64>
where
    T::Prediction: TrackerOutput,
{
    finite_diff_check(tracker, &state.window, state.cotangent, cfg.step, cfg.probes, rng)
}

/// Runs the check on `cfg.states` random states. With `corrupt` the
/// pullback is scaled by 1.05 so the check is expected to fail.
pub fn run_gradcheck<R: Rng + ?Sized>(
    cfg: &GradcheckConfig,
    tracker_cfg: &TrackerConfig,
    corrupt: bool,
    rng: &mut R,
) -> Result<GradcheckReport> {
    cfg.validate()?;
    tracker_cfg.validate()?;
    let mut per_state = Vec::with_capacity(cfg.states);
    for _ in 0..cfg.states {
        let state = random_state(cfg, tracker_cfg, rng)?;
        let err = if corrupt {
            let bad = CorruptedBackward {
                inner: state.tracker.clone(),
                scale: 1.05,
            };
            check_state(&bad, &state, cfg, rng)?
        } else {
            check_state(&state.tracker, &state, cfg, rng)?
        };
        per_state.push(err);
    }
    let worst = per_state.iter().copied().fold(0.0, f64::max);
    Ok(GradcheckReport {
        passed: worst < cfg.tolerance,
        per_state,
        worst,
        tolerance: cfg.tolerance,
    })
}
