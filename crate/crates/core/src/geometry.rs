//! Axis-aligned boxes, overlap measures and the adversarial box generator.
//!
//! Boxes are `(x, y, w, h)` in pixels with `(x, y)` the top-left corner.
//! The generator samples `k` boxes around a predicted box by translating it
//! by a fraction of its extent and shrinking it by a common scale factor;
//! [`select_positive`] then keeps the highest-overlap fraction of them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from its center point and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn validate(&self) -> Result<()> {
        let reason = if ![self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            Some("non-finite coordinate")
        } else if self.w <= 0.0 || self.h <= 0.0 {
            Some("non-positive width or height")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                reason,
            }),
            None => Ok(()),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    Ok((ax - bx).hypot(ay - by))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGenConfig {
    /// Number of boxes generated per call.
    pub k: usize,
    /// Translation range, as a fraction of the box extent along each axis.
    pub t_min: f64,
    pub t_max: f64,
    /// Common scale applied to width and height.
    pub s_min: f64,
    pub s_max: f64,
    /// Fraction of the generated boxes kept as positives.
    pub retain_fraction: f64,
    /// Draw a random sign for each offset instead of always drifting to +x/+y.
    pub symmetric_offsets: bool,
}

impl Default for BoxGenConfig {
    fn default() -> Self {
        Self {
            k: 1024,
            t_min: 0.1,
            t_max: 0.4,
            s_min: 0.7,
            s_max: 0.9,
            retain_fraction: 0.8,
            symmetric_offsets: false,
        }
    }
}

impl BoxGenConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_min, self.t_max, self.s_min, self.s_max, self.retain_fraction]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("box generator parameters must be finite".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("boxgen.k must be at least 1".into()));
        }
        if !(0.0 <= self.t_min && self.t_min <= self.t_max) {
            return Err(Error::Config("boxgen requires 0 <= t_min <= t_max".into()));
        }
        if !(0.0 < self.s_min && self.s_min <= self.s_max) {
            return Err(Error::Config("boxgen requires 0 < s_min <= s_max".into()));
        }
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::Config("boxgen.retain_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Number of boxes kept by [`select_positive`].
    pub fn retained(&self) -> usize {
        retained_count(self.k, self.retain_fraction)
    }
}

fn retained_count(k: usize, retain_fraction: f64) -> usize {
    // The small bias keeps products like 0.7 * 10 = 7.000000000000001 from
    // rounding up an extra box.
    let m = (retain_fraction * k as f64 - 1e-9).ceil() as usize;
    m.clamp(1, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialBoxBatch {
    pub boxes: Vec<BoundingBox>,
    pub ious: Vec<f64>,
    /// Adaptive IoU threshold; meaningful once [`select_positive`] has run.
    pub zeta: f64,
    /// Indices into `boxes`, ascending. Empty until selection.
    pub selected: Vec<usize>,
}

impl AdversarialBoxBatch {
    pub fn selected_boxes(&self) -> Vec<BoundingBox> {
        self.selected.iter().map(|&i| self.boxes[i]).collect()
    }
}

/// Applies one set of generator parameters to `base`.
pub fn adversarial_box(base: &BoundingBox, tx: f64, ty: f64, scale: f64) -> Result<BoundingBox> {
    let b = BoundingBox {
        x: base.x + tx * base.w,
        y: base.y + ty * base.h,
        w: base.w * scale,
        h: base.h * scale,
    };
    b.validate().map_err(|_| {
        Error::Degenerate(format!(
            "generated box ({}, {}, {}, {}) has non-positive extent",
            b.x, b.y, b.w, b.h
        ))
    })?;
    Ok(b)
}

/// Samples `cfg.k` boxes around `b_pred` and fills in their IoU with it.
///
/// Per box, draws `tx`, `ty` and `s` uniformly from the configured ranges
/// (in that order) and emits `(x + tx*w, y + ty*h, s*w, s*h)`.
pub fn generate_adversarial_boxes<R: Rng + ?Sized>(
    b_pred: &BoundingBox,
    cfg: &BoxGenConfig,
    rng: &mut R,
) -> Result<AdversarialBoxBatch> {
    cfg.validate()?;
    b_pred.validate()?;
    if b_pred.w < 1.0 || b_pred.h < 1.0 {
        return Err(Error::Degenerate(format!(
            "predicted box {}x{} is below one pixel",
            b_pred.w, b_pred.h
        )));
    }
    let mut boxes = Vec::with_capacity(cfg.k);
    let mut ious = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let mut tx = rng.random_range(cfg.t_min..=cfg.t_max);
        let mut ty = rng.random_range(cfg.t_min..=cfg.t_max);
        let s = rng.random_range(cfg.s_min..=cfg.s_max);
        if cfg.symmetric_offsets {
            if rng.random::<bool>() {
                tx = -tx;
            }
            if rng.random::<bool>() {
                ty = -ty;
            }
        }
        let b = adversarial_box(b_pred, tx, ty, s)?;
        ious.push(iou(b_pred, &b)?);
        boxes.push(b);
    }
    Ok(AdversarialBoxBatch {
        boxes,
        ious,
        zeta: 0.0,
        selected: Vec::new(),
    })
}

/// Keeps the `ceil(retain_fraction * k)` boxes with the highest IoU.
///
/// Ties go to the lower index. `zeta` is the smallest retained IoU.
pub fn select_positive(
    mut batch: AdversarialBoxBatch,
    retain_fraction: f64,
) -> Result<AdversarialBoxBatch> {
    let k = batch.ious.len();
    if k == 0 || batch.boxes.len() != k {
        return Err(Error::Empty("adversarial box batch"));
    }
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::Config("retain_fraction must lie in (0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps lower indices first among equal IoUs.
    order.sort_by(|&a, &b| batch.ious[b].total_cmp(&batch.ious[a]));
    let m = retained_count(k, retain_fraction);
    let mut selected = order[..m].to_vec();
    batch.zeta = batch.ious[order[m - 1]];
    selected.sort_unstable();
    batch.selected = selected;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bb(0., 0., 2., 2.), &bb(0., 0., 2., 2.)).unwrap(), 1.0);
        assert_eq!(iou(&bb(0., 0., 1., 1.), &bb(5., 5., 1., 1.)).unwrap(), 0.0);
        let v = iou(&bb(0., 0., 2., 2.), &bb(1., 1., 2., 2.)).unwrap();
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_rejects_bad_boxes() {
        let bad = BoundingBox { x: 0., y: 0., w: 0., h: 2. };
        assert!(iou(&bad, &bb(0., 0., 1., 1.)).is_err());
        let nan = BoundingBox { x: f64::NAN, y: 0., w: 1., h: 2. };
        assert!(iou(&bb(0., 0., 1., 1.), &nan).is_err());
        assert!(BoundingBox::new(0., 0., 3., -1.).is_err());
    }

    #[test]
    fn center_distance_examples() {
        let a = bb(0., 0., 2., 2.);
        assert_eq!(center_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(center_distance(&a, &bb(3., 4., 2., 2.)).unwrap(), 5.0);
        let d = center_distance(&bb(0., 0., 4., 2.), &bb(0., 0., 2., 4.)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_generated_box() {
        let b = adversarial_box(&bb(100., 100., 50., 40.), 0.2, 0.1, 0.8).unwrap();
        assert!((b.x - 110.0).abs() < 1e-12);
        assert!((b.y - 104.0).abs() < 1e-12);
        assert!((b.w - 40.0).abs() < 1e-12);
        assert!((b.h - 32.0).abs() < 1e-12);
    }

    #[test]
    fn identity_parameters_reproduce_prediction() {
        let cfg = BoxGenConfig {
            k: 8,
            t_min: 0.0,
            t_max: 0.0,
            s_min: 1.0,
            s_max: 1.0,
            ..Default::default()
        };
        let pred = bb(12.5, 7.0, 20.0, 30.0);
        let batch = generate_adversarial_boxes(&pred, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(batch.boxes.iter().all(|b| *b == pred));
        assert!(batch.ious.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sub_pixel_prediction_is_rejected() {
        let pred = bb(5.0, 5.0, 0.5, 10.0);
        let err = generate_adversarial_boxes(&pred, &BoxGenConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetric_offsets_produce_both_directions() {
        let cfg = BoxGenConfig {
            symmetric_offsets: true,
            ..Default::default()
        };
        let pred = bb(50., 50., 20., 20.);
        let batch = generate_adversarial_boxes(&pred, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(batch.boxes.iter().any(|b| b.x < pred.x));
        assert!(batch.boxes.iter().any(|b| b.x > pred.x));
    }

    fn batch_from_ious(ious: &[f64]) -> AdversarialBoxBatch {
        AdversarialBoxBatch {
            boxes: vec![bb(0., 0., 1., 1.); ious.len()],
            ious: ious.to_vec(),
            zeta: 0.0,
            selected: Vec::new(),
        }
    }

    #[test]
    fn select_keeps_top_fraction() {
        let out = select_positive(batch_from_ious(&[0.9, 0.8, 0.7, 0.6, 0.5]), 0.8).unwrap();
        assert_eq!(out.selected, vec![0, 1, 2, 3]);
        assert_eq!(out.zeta, 0.6);

        let out = select_positive(batch_from_ious(&[0.5, 0.9, 0.6, 0.8, 0.7]), 0.8).unwrap();
        assert_eq!(out.selected, vec![1, 2, 3, 4]);
        assert_eq!(out.zeta, 0.6);
    }

    #[test]
    fn select_breaks_ties_by_index() {
        let out = select_positive(batch_from_ious(&[0.4; 10]), 0.8).unwrap();
        assert_eq!(out.selected, (0..8).collect::<Vec<_>>());
        assert_eq!(out.zeta, 0.4);
        // 0.7 * 10 is 7.000000000000001 in binary floating point.
        let out = select_positive(batch_from_ious(&[0.4; 10]), 0.7).unwrap();
        assert_eq!(out.selected.len(), 7);
    }

    #[test]
    fn select_single_box() {
        let out = select_positive(batch_from_ious(&[0.37]), 0.8).unwrap();
        assert_eq!(out.selected, vec![0]);
        assert_eq!(out.zeta, 0.37);
    }

    #[test]
    fn select_rejects_empty() {
        assert!(select_positive(batch_from_ious(&[]), 0.8).is_err());
    }
}
