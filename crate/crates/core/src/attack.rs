//! Bounding-box driven white-box attack and two comparison baselines.
//!
//! Every iteration the attack samples adversarial boxes around the tracker's
//! current prediction, keeps the best-overlapping ones as regression targets,
//! and takes a signed gradient step on the search window that pulls the
//! prediction towards them. The perturbation stays inside an L-infinity ball
//! and the perturbed window inside the valid pixel range.

use ndarray::{Array2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{generate_adversarial_boxes, select_positive, BoundingBox, BoxGenConfig};
use crate::image::Image;
use crate::tracker::{BoxCotangent, DifferentiableTracker, SearchWindow, TrackerOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L-infinity budget in pixel units.
    pub epsilon: f64,
    pub steps: usize,
    /// Signed-gradient step per iteration, in pixel units.
    pub step_size: f64,
    /// Start each frame from the previous frame's perturbation.
    pub carry_over: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 10.0,
            steps: 10,
            step_size: 1.0,
            carry_over: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("attack.epsilon must be finite and >= 0".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("attack.steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("attack.step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Additive delta over a search window, anchored in frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub origin: (i64, i64),
    pub delta: Array2<f64>,
}

impl Perturbation {
    pub fn zeros_like(window: &SearchWindow) -> Self {
        Self {
            origin: window.origin,
            delta: Array2::zeros(window.shape()),
        }
    }

    pub fn linf(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_mean(&self) -> f64 {
        if self.delta.is_empty() {
            return 0.0;
        }
        self.delta.iter().map(|v| v.abs()).sum::<f64>() / self.delta.len() as f64
    }

    /// Re-expresses the delta over a window at `origin` with `shape`. Pixels
    /// outside the old window get zero.
    pub fn remap(&self, origin: (i64, i64), shape: (usize, usize)) -> Perturbation {
        let (dr, dc) = (origin.0 - self.origin.0, origin.1 - self.origin.1);
        let (oh, ow) = self.delta.dim();
        let delta = Array2::from_shape_fn(shape, |(r, c)| {
            let (sr, sc) = (r as i64 + dr, c as i64 + dc);
            if sr >= 0 && sc >= 0 && (sr as usize) < oh && (sc as usize) < ow {
                self.delta[[sr as usize, sc as usize]]
            } else {
                0.0
            }
        });
        Perturbation { origin, delta }
    }

    fn project(&mut self, epsilon: f64) {
        self.delta.mapv_inplace(|v| v.clamp(-epsilon, epsilon));
    }

    /// Shrinks the delta to what survives clamping `window + delta` to `[0, 255]`.
    fn realize(&mut self, window: &SearchWindow) {
        Zip::from(&mut self.delta)
            .and(&window.pixels)
            .for_each(|d, &p| *d = (p + *d).clamp(0.0, 255.0) - p);
    }

    pub fn apply(&self, window: &SearchWindow) -> SearchWindow {
        window.perturbed(&self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAttackReport {
    pub clean_box: BoundingBox,
    pub attacked_box: BoundingBox,
    /// One entry per iteration; `NaN` after an abort.
    pub loss_per_iteration: Vec<f64>,
    pub zeta_per_iteration: Vec<f64>,
    pub final_delta_linf: f64,
    pub final_delta_l1_mean: f64,
    /// The predicted box became degenerate and the clean prediction was kept.
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct FrameAttack<P> {
    pub perturbation: Perturbation,
    pub prediction: P,
    pub report: FrameAttackReport,
    pub clean_window: SearchWindow,
    /// What the tracker saw for its final prediction.
    pub attacked_window: SearchWindow,
}

pub fn smoothed_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smoothed_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLoss {
    pub value: f64,
    /// Gradient with respect to the predicted `(x, y, w, h)` in pixels.
    pub grad: BoxCotangent,
}

/// Mean over targets of the smoothed-L1 distance between `b_pred` and each
/// target, summed over the four coordinates after dividing `x, w` by the
/// window width and `y, h` by the window height. Targets are constants.
pub fn abbg_loss(
    b_pred: &BoundingBox,
    targets: &[BoundingBox],
    window_extent: (usize, usize),
) -> Result<BoxLoss> {
    if targets.is_empty() {
        return Err(Error::Empty("target boxes"));
    }
    let (eh, ew) = (window_extent.0 as f64, window_extent.1 as f64);
    let scale = [ew, eh, ew, eh];
    let pred = b_pred.to_array();
    let mut value = 0.0;
    let mut grad = [0.0; 4];
    for t in targets {
        let t = t.to_array();
        for k in 0..4 {
            let d = (pred[k] - t[k]) / scale[k];
            value += smoothed_l1(d);
            grad[k] += smoothed_l1_grad(d) / scale[k];
        }
    }
    let m = targets.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok(BoxLoss {
        value: value / m,
        grad,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `delta <- clip(delta + direction * step * sign(grad), epsilon)`.
fn signed_step(p: &mut Perturbation, grad: &Array2<f64>, direction: f64, acfg: &AttackConfig) {
    Zip::from(&mut p.delta)
        .and(grad)
        .for_each(|d, &g| *d += direction * acfg.step_size * sign(g));
    p.project(acfg.epsilon);
}

fn finish<T: DifferentiableTracker>(
    tracker: &T,
    clean_window: SearchWindow,
    clean_box: BoundingBox,
    perturbation: Perturbation,
    losses: Vec<f64>,
    zetas: Vec<f64>,
) -> Result<FrameAttack<T::Prediction>> {
    let attacked_window = perturbation.apply(&clean_window);
    let prediction = tracker.predict(&attacked_window)?;
    let report = FrameAttackReport {
        clean_box,
        attacked_box: *prediction.bbox(),
        loss_per_iteration: losses,
        zeta_per_iteration: zetas,
        final_delta_linf: perturbation.linf(),
        final_delta_l1_mean: perturbation.l1_mean(),
        aborted: false,
    };
    Ok(FrameAttack {
        perturbation,
        prediction,
        report,
        clean_window,
        attacked_window,
    })
}

fn abort<T: DifferentiableTracker>(
    tracker: &T,
    clean_window: SearchWindow,
    steps: usize,
    mut losses: Vec<f64>,
    zetas: Vec<f64>,
) -> Result<FrameAttack<T::Prediction>> {
    let prediction = tracker.predict(&clean_window)?;
    let clean_box = *prediction.bbox();
    losses.resize(steps, f64::NAN);
    Ok(FrameAttack {
        perturbation: Perturbation::zeros_like(&clean_window),
        report: FrameAttackReport {
            clean_box,
            attacked_box: clean_box,
            loss_per_iteration: losses,
            zeta_per_iteration: zetas,
            final_delta_linf: 0.0,
            final_delta_l1_mean: 0.0,
            aborted: true,
        },
        prediction,
        attacked_window: clean_window.clone(),
        clean_window,
    })
}

/// Attacks one frame. The caller decides whether to advance the tracker
/// with the returned (attacked) prediction.
pub fn abbg_attack_frame<T, R>(
    tracker: &T,
    frame: &Image,
    acfg: &AttackConfig,
    gcfg: &BoxGenConfig,
    rng: &mut R,
    incoming: Option<&Perturbation>,
) -> Result<FrameAttack<T::Prediction>>
where
    T: DifferentiableTracker,
    R: Rng + ?Sized,
{
    acfg.validate()?;
    gcfg.validate()?;
    let clean_window = tracker.crop_window(frame);
    let clean_box = *tracker.predict(&clean_window)?.bbox();
    let shape = clean_window.shape();
    let mut delta = match incoming {
        Some(p) => p.remap(clean_window.origin, shape),
        None => Perturbation::zeros_like(&clean_window),
    };
    delta.project(acfg.epsilon);

    let mut losses = Vec::with_capacity(acfg.steps);
    let mut zetas = Vec::with_capacity(acfg.steps);
    for _ in 0..acfg.steps {
        delta.realize(&clean_window);
        let input = delta.apply(&clean_window);
        let pred = tracker.predict(&input)?;
        let b_pred = *pred.bbox();
        let batch = match generate_adversarial_boxes(&b_pred, gcfg, rng) {
            Ok(b) => b,
            Err(Error::Degenerate(_)) => {
                return abort(tracker, clean_window, acfg.steps, losses, zetas)
            }
            Err(e) => return Err(e),
        };
        let batch = select_positive(batch, gcfg.retain_fraction)?;
        let loss = abbg_loss(&b_pred, &batch.selected_boxes(), shape)?;
        let grad = tracker.pullback(&pred, loss.grad)?;
        losses.push(loss.value);
        zetas.push(batch.zeta);
        signed_step(&mut delta, &grad, -1.0, acfg);
    }
    delta.realize(&clean_window);
    finish(tracker, clean_window, clean_box, delta, losses, zetas)
}

/// Uniform noise in `[-epsilon, epsilon]`, trimmed so `window + delta` stays
/// in range.
pub fn random_noise_baseline<R: Rng + ?Sized>(
    window: &SearchWindow,
    acfg: &AttackConfig,
    rng: &mut R,
) -> Result<Perturbation> {
    acfg.validate()?;
    let eps = acfg.epsilon;
    let mut p = Perturbation {
        origin: window.origin,
        delta: Array2::from_shape_simple_fn(window.shape(), || rng.random_range(-eps..=eps)),
    };
    p.realize(window);
    Ok(p)
}

/// Runs [`random_noise_baseline`] on the tracker's window for `frame`.
pub fn random_noise_frame<T, R>(
    tracker: &T,
    frame: &Image,
    acfg: &AttackConfig,
    rng: &mut R,
) -> Result<FrameAttack<T::Prediction>>
where
    T: DifferentiableTracker,
    R: Rng + ?Sized,
{
    let clean_window = tracker.crop_window(frame);
    let clean_box = *tracker.predict(&clean_window)?.bbox();
    let delta = random_noise_baseline(&clean_window, acfg, rng)?;
    finish(tracker, clean_window, clean_box, delta, Vec::new(), Vec::new())
}

/// Untargeted control: from a uniform random start inside the budget, ascend
/// the smoothed-L1 distance between the current prediction and the clean
/// prediction with the same signed steps and projection as the main attack.
pub fn untargeted_pgd_baseline<T, R>(
    tracker: &T,
    frame: &Image,
    acfg: &AttackConfig,
    rng: &mut R,
) -> Result<FrameAttack<T::Prediction>>
where
    T: DifferentiableTracker,
    R: Rng + ?Sized,
{
    acfg.validate()?;
    let clean_window = tracker.crop_window(frame);
    let clean_box = *tracker.predict(&clean_window)?.bbox();
    let shape = clean_window.shape();
    let mut delta = random_noise_baseline(&clean_window, acfg, rng)?;
    let mut losses = Vec::with_capacity(acfg.steps);
    for _ in 0..acfg.steps {
        delta.realize(&clean_window);
        let pred = tracker.predict(&delta.apply(&clean_window))?;
        let loss = abbg_loss(pred.bbox(), &[clean_box], shape)?;
        let grad = tracker.pullback(&pred, loss.grad)?;
        losses.push(loss.value);
        signed_step(&mut delta, &grad, 1.0, acfg);
    }
    delta.realize(&clean_window);
    finish(tracker, clean_window, clean_box, delta, losses, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_l1_values() {
        assert_eq!(smoothed_l1(0.0), 0.0);
        assert_eq!(smoothed_l1(0.5), 0.125);
        assert_eq!(smoothed_l1(2.0), 1.5);
        assert_eq!(smoothed_l1(-2.0), 1.5);
        // Continuous at the knot.
        assert!((smoothed_l1(1.0 - 1e-12) - smoothed_l1(1.0)).abs() < 1e-11);
    }

    #[test]
    fn smoothed_l1_grad_values() {
        assert_eq!(smoothed_l1_grad(0.0), 0.0);
        assert_eq!(smoothed_l1_grad(0.5), 0.5);
        assert_eq!(smoothed_l1_grad(-3.0), -1.0);
    }

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn loss_zero_on_self() {
        let b = bb(10.0, 12.0, 16.0, 16.0);
        let l = abbg_loss(&b, &[b], (48, 48)).unwrap();
        assert_eq!(l.value, 0.0);
        assert_eq!(l.grad, [0.0; 4]);
    }

    #[test]
    fn loss_single_displaced_target() {
        let b = bb(10.0, 12.0, 16.0, 16.0);
        let t = bb(10.0 + 0.2 * 50.0, 12.0, 16.0, 16.0);
        let l = abbg_loss(&b, &[t], (40, 50)).unwrap();
        assert!((l.value - 0.02).abs() < 1e-15);
        // -0.2 in normalized units, divided by the width for pixel units.
        assert!((l.grad[0] * 50.0 + 0.2).abs() < 1e-15);
        assert_eq!(&l.grad[1..], &[0.0; 3]);
    }

    #[test]
    fn loss_symmetric_targets_cancel() {
        let b = bb(10.0, 12.0, 16.0, 16.0);
        let targets = [bb(7.0, 14.0, 16.0, 16.0), bb(13.0, 14.0, 16.0, 16.0)];
        let l = abbg_loss(&b, &targets, (48, 48)).unwrap();
        assert_eq!(l.grad[0], 0.0);
        assert!(l.grad[1] < 0.0);
    }

    #[test]
    fn loss_rejects_empty_targets() {
        assert!(abbg_loss(&bb(0.0, 0.0, 1.0, 1.0), &[], (8, 8)).is_err());
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let b = bb(10.0, 12.0, 16.0, 14.0);
        let targets = [bb(12.0, 14.5, 13.0, 11.0), bb(13.5, 15.0, 12.0, 12.5), bb(5.0, 30.0, 40.0, 9.0)];
        let extent = (36, 48);
        let l = abbg_loss(&b, &targets, extent).unwrap();
        let h = 1e-4;
        for k in 0..4 {
            let mut p = b.to_array();
            p[k] += h;
            let plus = abbg_loss(&bb(p[0], p[1], p[2], p[3]), &targets, extent).unwrap().value;
            p[k] -= 2.0 * h;
            let minus = abbg_loss(&bb(p[0], p[1], p[2], p[3]), &targets, extent).unwrap().value;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (numeric - l.grad[k]).abs() / l.grad[k].abs().max(1e-12);
            assert!(rel < 1e-6, "coordinate {k}: {rel}");
        }
    }

    #[test]
    fn remap_shifts_and_zero_fills() {
        let p = Perturbation {
            origin: (10, 20),
            delta: Array2::from_shape_fn((3, 3), |(r, c)| (r * 3 + c) as f64 + 1.0),
        };
        let q = p.remap((11, 19), (3, 3));
        assert_eq!(q.origin, (11, 19));
        assert_eq!(q.delta[[0, 0]], 0.0);
        assert_eq!(q.delta[[0, 1]], 4.0);
        assert_eq!(q.delta[[1, 2]], 8.0);
        assert_eq!(q.delta[[2, 1]], 0.0);
    }

    #[test]
    fn random_noise_respects_budget() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let window = SearchWindow {
            origin: (0, 0),
            pixels: Array2::from_shape_fn((12, 12), |(r, c)| ((r * 40 + c * 3) % 256) as f64),
        };
        let acfg = AttackConfig::default();
        let a = random_noise_baseline(&window, &acfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_noise_baseline(&window, &acfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.linf() <= 10.0);
        let applied = a.apply(&window);
        assert!(applied.pixels.iter().all(|&v| (0.0..=255.0).contains(&v)));
        let zero = AttackConfig {
            epsilon: 0.0,
            ..AttackConfig::default()
        };
        let z = random_noise_baseline(&window, &zero, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(z.linf(), 0.0);
    }
}
