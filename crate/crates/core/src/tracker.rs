//! Differentiable template-matching tracker.
//!
//! The reference tracker scores every template placement inside a search
//! window with zero-normalized cross-correlation, localizes the target with a
//! soft-argmax over those scores and sets the box size from the spread of the
//! resulting distribution. Every step is smooth in the window pixels, and
//! [`TrackerState::pullback`] returns the exact gradient of any linear
//! functional of the predicted box with respect to those pixels.
//!
//! Attacks are written against the [`DifferentiableTracker`] trait so other
//! trackers (or test doubles) can be plugged in.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::{crop_replicate, Image};

/// Added to every variance before the square root in the correlation.
pub const VARIANCE_GUARD: f64 = 1e-6;

/// Search windows span this many template extents along each axis.
pub const WINDOW_FACTOR: usize = 3;

pub const MIN_TEMPLATE_SIDE: usize = 4;

/// Gradient of a scalar loss with respect to the predicted `(x, y, w, h)`.
pub type BoxCotangent = [f64; 4];

/// Grayscale region of a frame that the tracker looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchWindow {
    /// Frame coordinates `(row, col)` of the window's top-left pixel.
    pub origin: (i64, i64),
    pub pixels: Array2<f64>,
}

impl SearchWindow {
    pub fn shape(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    /// Copy with `delta` added and the result clamped to `[0, 255]`.
    pub fn perturbed(&self, delta: &Array2<f64>) -> SearchWindow {
        let mut pixels = &self.pixels + delta;
        pixels.mapv_inplace(|v| v.clamp(0.0, 255.0));
        SearchWindow {
            origin: self.origin,
            pixels,
        }
    }
}

pub trait TrackerOutput {
    fn bbox(&self) -> &BoundingBox;
}

/// What an attack needs from a tracker: a forward pass on a search window and
/// the pullback of a box cotangent to window pixels.
pub trait DifferentiableTracker {
    type Prediction: TrackerOutput;

    fn window_shape(&self) -> (usize, usize);

    fn crop_window(&self, frame: &Image) -> SearchWindow;

    fn predict(&self, window: &SearchWindow) -> Result<Self::Prediction>;

    /// Gradient of `<cotangent, box>` with respect to each window pixel.
    fn pullback(&self, prediction: &Self::Prediction, cotangent: BoxCotangent)
        -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Weight given to the newly predicted size when updating the state.
    pub size_damping: f64,
    /// Inverse temperature of the soft-argmax.
    pub temperature: f64,
    /// Size factor at zero spread and at uniform spread.
    pub size_range: (f64, f64),
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            size_damping: 0.3,
            temperature: 10.0,
            size_range: (0.5, 1.5),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.size_damping > 0.0 && self.size_damping <= 1.0) {
            return Err(Error::Config("tracker.size_damping must lie in (0, 1]".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("tracker.temperature must be positive".into()));
        }
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config("tracker size range needs 0 < f_min <= f_max".into()));
        }
        Ok(())
    }
}

/// Template statistics reused by every correlation.
#[derive(Debug, Clone, PartialEq)]
struct CenteredTemplate {
    centered: Array2<f64>,
    sigma: f64,
}

impl CenteredTemplate {
    fn new(template: ArrayView2<'_, f64>) -> Self {
        let n = template.len() as f64;
        let mean = template.sum() / n;
        let centered = template.mapv(|v| v - mean);
        let var = centered.iter().map(|v| v * v).sum::<f64>() / n;
        Self {
            centered,
            sigma: (var + VARIANCE_GUARD).sqrt(),
        }
    }
}

struct NccForward {
    scores: Array2<f64>,
    patch_mean: Array2<f64>,
    patch_sigma: Array2<f64>,
}

fn ncc_forward(window: ArrayView2<'_, f64>, tpl: &CenteredTemplate) -> Result<NccForward> {
    let (wh, ww) = window.dim();
    let (th, tw) = tpl.centered.dim();
    if th > wh || tw > ww {
        return Err(Error::TemplateLargerThanWindow {
            template: (th, tw),
            window: (wh, ww),
        });
    }
    let (gh, gw) = (wh - th + 1, ww - tw + 1);
    let n = (th * tw) as f64;
    let mut scores = Array2::zeros((gh, gw));
    let mut patch_mean = Array2::zeros((gh, gw));
    let mut patch_sigma = Array2::zeros((gh, gw));
    for u in 0..gh {
        for v in 0..gw {
            let mut sum = 0.0;
            for i in 0..th {
                for j in 0..tw {
                    sum += window[[u + i, v + j]];
                }
            }
            let mean = sum / n;
            let mut var = 0.0;
            let mut cross = 0.0;
            for i in 0..th {
                for j in 0..tw {
                    let d = window[[u + i, v + j]] - mean;
                    var += d * d;
                    cross += tpl.centered[[i, j]] * d;
                }
            }
            let sigma = (var / n + VARIANCE_GUARD).sqrt();
            scores[[u, v]] = cross / (n * tpl.sigma * sigma);
            patch_mean[[u, v]] = mean;
            patch_sigma[[u, v]] = sigma;
        }
    }
    Ok(NccForward {
        scores,
        patch_mean,
        patch_sigma,
    })
}

/// Zero-normalized cross-correlation of `template` at every placement inside
/// `window`. Values lie in `[-1, 1]`.
pub fn ncc_map(window: ArrayView2<'_, f64>, template: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(ncc_forward(window, &CenteredTemplate::new(template))?.scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftArgmax {
    pub row: f64,
    pub col: f64,
    pub probability: Array2<f64>,
}

/// Expected cell coordinates under `softmax(beta * score)`.
pub fn soft_argmax(score: ArrayView2<'_, f64>, beta: f64) -> SoftArgmax {
    let max = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probability = score.mapv(|s| (beta * (s - max)).exp());
    let total = probability.sum();
    probability /= total;
    let (mut row, mut col) = (0.0, 0.0);
    for ((u, v), &p) in probability.indexed_iter() {
        row += p * u as f64;
        col += p * v as f64;
    }
    SoftArgmax {
        row,
        col,
        probability,
    }
}

/// Spread of the uniform distribution over a `rows x cols` grid of cells.
pub fn uniform_spread(rows: usize, cols: usize) -> f64 {
    let (r, c) = (rows as f64, cols as f64);
    (r * r - 1.0) / 12.0 + (c * c - 1.0) / 12.0
}

/// Second moment of a distribution over grid cells about its mean.
pub fn spread(probability: ArrayView2<'_, f64>) -> f64 {
    let (mut mr, mut mc) = (0.0, 0.0);
    for ((u, v), &p) in probability.indexed_iter() {
        mr += p * u as f64;
        mc += p * v as f64;
    }
    probability
        .indexed_iter()
        .map(|((u, v), &p)| p * ((u as f64 - mr).powi(2) + (v as f64 - mc).powi(2)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeFactor {
    pub spread: f64,
    /// Spread relative to the uniform distribution.
    pub ratio: f64,
    pub factor: f64,
}

/// Maps response spread to a size factor in `[f_min, f_max]`.
pub fn size_factor(probability: ArrayView2<'_, f64>, f_min: f64, f_max: f64) -> SizeFactor {
    let (rows, cols) = probability.dim();
    let s = spread(probability);
    let reference = uniform_spread(rows, cols);
    let ratio = if reference > 0.0 { s / reference } else { 0.0 };
    SizeFactor {
        spread: s,
        ratio,
        factor: f_min + (f_max - f_min) * ratio.min(1.0),
    }
}

/// Scales the previous box size by the spread-derived factor.
pub fn spread_size_head(
    probability: ArrayView2<'_, f64>,
    prev_box: &BoundingBox,
    f_min: f64,
    f_max: f64,
) -> (f64, f64) {
    let f = size_factor(probability, f_min, f_max).factor;
    (prev_box.w * f, prev_box.h * f)
}

/// Forward-pass result with everything the pullback needs.
#[derive(Debug, Clone)]
pub struct BoxPrediction {
    pub bbox: BoundingBox,
    pub score_map: Array2<f64>,
    pub probability_map: Array2<f64>,
    pub row: f64,
    pub col: f64,
    pub size: SizeFactor,
    window: SearchWindow,
    patch_mean: Array2<f64>,
    patch_sigma: Array2<f64>,
    prev_box: BoundingBox,
}

impl TrackerOutput for BoxPrediction {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
}

/// Single-target tracker with a fixed template.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    template: Array2<f64>,
    centered: CenteredTemplate,
    prev_box: BoundingBox,
    config: TrackerConfig,
    /// Size factor of the clean response on the initialization frame; the
    /// size head is expressed relative to it so an unchanged response keeps
    /// the box size.
    size_reference: f64,
}

impl TrackerState {
    /// Extracts the template at the rounded ground-truth box.
    pub fn init(frame: &Image, gt: &BoundingBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        gt.validate()?;
        let top = gt.y.round();
        let left = gt.x.round();
        let rows = gt.h.round();
        let cols = gt.w.round();
        if rows < MIN_TEMPLATE_SIDE as f64 || cols < MIN_TEMPLATE_SIDE as f64 {
            return Err(Error::TemplateTooSmall {
                rows: rows.max(0.0) as usize,
                cols: cols.max(0.0) as usize,
            });
        }
        let (fh, fw) = (frame.height(), frame.width());
        if top < 0.0 || left < 0.0 || top + rows > fh as f64 || left + cols > fw as f64 {
            return Err(Error::OutOfBounds {
                height: fh,
                width: fw,
            });
        }
        let gray = frame.to_gray();
        let template = crop_replicate(
            gray.view(),
            top as i64,
            left as i64,
            rows as usize,
            cols as usize,
        );
        let mut state = Self {
            centered: CenteredTemplate::new(template.view()),
            template,
            prev_box: *gt,
            config,
            size_reference: 1.0,
        };
        let window = state.crop_window(frame);
        let fwd = ncc_forward(window.pixels.view(), &state.centered)?;
        let sa = soft_argmax(fwd.scores.view(), state.config.temperature);
        let (f_min, f_max) = state.config.size_range;
        state.size_reference = size_factor(sa.probability.view(), f_min, f_max).factor;
        Ok(state)
    }

    pub fn template(&self) -> &Array2<f64> {
        &self.template
    }

    pub fn prev_box(&self) -> &BoundingBox {
        &self.prev_box
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn size_reference(&self) -> f64 {
        self.size_reference
    }

    /// Top-left frame coordinate of the window centered on the previous box.
    pub fn window_origin(&self) -> (i64, i64) {
        let (th, tw) = self.template.dim();
        let (cx, cy) = self.prev_box.center();
        (
            cy.round() as i64 - (WINDOW_FACTOR * th / 2) as i64,
            cx.round() as i64 - (WINDOW_FACTOR * tw / 2) as i64,
        )
    }

    /// Moves the box center to the prediction and blends the size.
    pub fn update(&self, predicted: &BoundingBox) -> Result<Self> {
        predicted.validate()?;
        let lambda = self.config.size_damping;
        let w = (1.0 - lambda) * self.prev_box.w + lambda * predicted.w;
        let h = (1.0 - lambda) * self.prev_box.h + lambda * predicted.h;
        let (cx, cy) = predicted.center();
        Ok(Self {
            prev_box: BoundingBox::from_center(cx, cy, w, h)?,
            ..self.clone()
        })
    }

    fn check_window(&self, window: &SearchWindow) -> Result<()> {
        let expected = self.window_shape();
        if window.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected: (expected.0, expected.1, 1),
                actual: (window.shape().0, window.shape().1, 1),
            });
        }
        Ok(())
    }
}

impl DifferentiableTracker for TrackerState {
    type Prediction = BoxPrediction;

    fn window_shape(&self) -> (usize, usize) {
        let (th, tw) = self.template.dim();
        (WINDOW_FACTOR * th, WINDOW_FACTOR * tw)
    }

    fn crop_window(&self, frame: &Image) -> SearchWindow {
        let origin = self.window_origin();
        let (rows, cols) = self.window_shape();
        SearchWindow {
            origin,
            pixels: frame.crop_gray_replicate(origin.0, origin.1, rows, cols),
        }
    }

    fn predict(&self, window: &SearchWindow) -> Result<BoxPrediction> {
        self.check_window(window)?;
        let fwd = ncc_forward(window.pixels.view(), &self.centered)?;
        let sa = soft_argmax(fwd.scores.view(), self.config.temperature);
        let (f_min, f_max) = self.config.size_range;
        let size = size_factor(sa.probability.view(), f_min, f_max);
        let scale = size.factor / self.size_reference;
        let (th, tw) = self.template.dim();
        let cy = window.origin.0 as f64 + sa.row + th as f64 / 2.0;
        let cx = window.origin.1 as f64 + sa.col + tw as f64 / 2.0;
        let bbox = BoundingBox::from_center(cx, cy, self.prev_box.w * scale, self.prev_box.h * scale)?;
        Ok(BoxPrediction {
            bbox,
            score_map: fwd.scores,
            probability_map: sa.probability,
            row: sa.row,
            col: sa.col,
            size,
            window: window.clone(),
            patch_mean: fwd.patch_mean,
            patch_sigma: fwd.patch_sigma,
            prev_box: self.prev_box,
        })
    }

    fn pullback(&self, pred: &BoxPrediction, cotangent: BoxCotangent) -> Result<Array2<f64>> {
        if pred.prev_box != self.prev_box || pred.window.shape() != self.window_shape() {
            return Err(Error::StalePrediction);
        }
        let [gx, gy, gw, gh] = cotangent;
        // box = (cx - w/2, cy - h/2, w, h)
        let d_w = gw - 0.5 * gx;
        let d_h = gh - 0.5 * gy;
        let d_factor = (d_w * self.prev_box.w + d_h * self.prev_box.h) / self.size_reference;
        let (gh_rows, gw_cols) = pred.probability_map.dim();
        let (f_min, f_max) = self.config.size_range;
        let d_spread = if pred.size.ratio < 1.0 {
            d_factor * (f_max - f_min) / uniform_spread(gh_rows, gw_cols)
        } else {
            0.0
        };

        // Upstream gradient with respect to each probability, then through the softmax.
        let (mr, mc) = (pred.row, pred.col);
        let upstream = Array2::from_shape_fn((gh_rows, gw_cols), |(u, v)| {
            let (u, v) = (u as f64, v as f64);
            gy * u + gx * v + d_spread * (u * u + v * v - 2.0 * mr * u - 2.0 * mc * v)
        });
        let mean_upstream: f64 = Zip::from(&pred.probability_map)
            .and(&upstream)
            .fold(0.0, |acc, &p, &h| acc + p * h);
        let beta = self.config.temperature;
        let d_score = Zip::from(&pred.probability_map)
            .and(&upstream)
            .map_collect(|&p, &h| beta * p * (h - mean_upstream));

        // Correlation backward.
        let (th, tw) = self.template.dim();
        let n = (th * tw) as f64;
        let window = &pred.window.pixels;
        let mut grad = Array2::zeros(window.dim());
        for u in 0..gh_rows {
            for v in 0..gw_cols {
                let g = d_score[[u, v]];
                if g == 0.0 {
                    continue;
                }
                let sigma = pred.patch_sigma[[u, v]];
                let mean = pred.patch_mean[[u, v]];
                let a = g / (n * self.centered.sigma * sigma);
                let b = g * pred.score_map[[u, v]] / (n * sigma * sigma);
                for i in 0..th {
                    for j in 0..tw {
                        grad[[u + i, v + j]] +=
                            a * self.centered.centered[[i, j]] - b * (window[[u + i, v + j]] - mean);
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// Worst relative error between the analytic pullback and central finite
/// differences of `<cotangent, box>` at `probes` random window pixels.
///
/// The relative error uses `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn finite_diff_check<T, R>(
    tracker: &T,
    window: &SearchWindow,
    cotangent: BoxCotangent,
    step: f64,
    probes: usize,
    rng: &mut R,
) -> Result<f64>
where
    T: DifferentiableTracker,
    R: Rng + ?Sized,
{
    if probes == 0 {
        return Err(Error::Config("finite difference check needs at least one probe".into()));
    }
    let objective = |w: &SearchWindow| -> Result<f64> {
        let b = tracker.predict(w)?.bbox().to_array();
        Ok(b.iter().zip(cotangent.iter()).map(|(x, g)| x * g).sum())
    };
    let pred = tracker.predict(window)?;
    let analytic = tracker.pullback(&pred, cotangent)?;
    let (rows, cols) = window.shape();
    let mut probe = window.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let r = rng.random_range(0..rows);
        let c = rng.random_range(0..cols);
        let orig = window.pixels[[r, c]];
        probe.pixels[[r, c]] = orig + step;
        let plus = objective(&probe)?;
        probe.pixels[[r, c]] = orig - step;
        let minus = objective(&probe)?;
        probe.pixels[[r, c]] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[[r, c]];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
