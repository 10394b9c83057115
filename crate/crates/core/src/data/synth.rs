//! Synthetic single-object sequences with exact ground truth.
//!
//! A smoothly textured rectangle moves over a static grainy background. The
//! trajectory bounces off the frame borders so the object always stays fully
//! visible. Pixel values are integers, matching 8-bit video.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::sequence::Sequence;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Motion {
    Linear,
    /// Oscillation whose peak speed equals the configured velocity.
    Sinusoidal { period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    /// `(rows, cols)`.
    pub frame_size: (usize, usize),
    /// `(rows, cols)`.
    pub object_size: (usize, usize),
    /// Top-left `(y, x)` of the object in the first frame; centered when `None`.
    pub start: Option<(f64, f64)>,
    /// `(dy, dx)` in pixels per frame.
    pub velocity: (f64, f64),
    pub frames: usize,
    pub texture_seed: u64,
    pub noise_sigma: f64,
    pub motion: Motion,
    /// Amplitude of the smooth background variation around mid-gray.
    pub background_contrast: f64,
    /// Amplitude of per-pixel background grain.
    pub background_grain: f64,
    /// Object texture correlation length in pixels (1 gives iid pixels).
    pub object_cell: usize,
    /// Amplitude of the object texture around mid-gray.
    pub object_contrast: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            frame_size: (128, 128),
            object_size: (16, 16),
            start: None,
            velocity: (0.0, 0.0),
            frames: 100,
            texture_seed: 0,
            noise_sigma: 2.0,
            motion: Motion::Linear,
            background_contrast: 0.0,
            background_grain: 10.0,
            object_cell: 2,
            object_contrast: 80.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (fh, fw) = self.frame_size;
        let (oh, ow) = self.object_size;
        if oh == 0 || ow == 0 {
            return Err(Error::Config("object size must be positive".into()));
        }
        if oh > fh || ow > fw {
            return Err(Error::Config(format!(
                "object {oh}x{ow} does not fit in frame {fh}x{fw}"
            )));
        }
        if self.frames < 2 {
            return Err(Error::Config("a sequence needs at least two frames".into()));
        }
        let finite = [
            self.velocity.0,
            self.velocity.1,
            self.noise_sigma,
            self.background_contrast,
            self.background_grain,
            self.object_contrast,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.noise_sigma < 0.0 {
            return Err(Error::Config("synthetic parameters must be finite, noise >= 0".into()));
        }
        if self.object_cell == 0 {
            return Err(Error::Config("object_cell must be at least 1".into()));
        }
        if let Motion::Sinusoidal { period } = self.motion {
            if !(period > 0.0) {
                return Err(Error::Config("sinusoidal period must be positive".into()));
            }
        }
        Ok(())
    }

    /// Object top-left `(y, x)` in frame `t`.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let (fh, fw) = self.frame_size;
        let (oh, ow) = self.object_size;
        let (ly, lx) = ((fh - oh) as f64, (fw - ow) as f64);
        let (y0, x0) = self.start.unwrap_or((ly / 2.0, lx / 2.0));
        let t = t as f64;
        let (dy, dx) = match self.motion {
            Motion::Linear => (self.velocity.0 * t, self.velocity.1 * t),
            Motion::Sinusoidal { period } => {
                let phase = (2.0 * std::f64::consts::PI * t / period).sin();
                let amp = period / (2.0 * std::f64::consts::PI);
                (self.velocity.0 * amp * phase, self.velocity.1 * amp * phase)
            }
        };
        (reflect(y0 + dy, ly), reflect(x0 + dx, lx))
    }
}

/// Folds `p` into `[0, limit]` by mirroring at both ends.
pub fn reflect(p: f64, limit: f64) -> f64 {
    if limit <= 0.0 {
        return 0.0;
    }
    let m = p.rem_euclid(2.0 * limit);
    if m > limit {
        2.0 * limit - m
    } else {
        m
    }
}

/// Bilinear upsampling of a uniform `[-1, 1]` grid with one knot every
/// `cell` pixels.
fn smooth_noise(rows: usize, cols: usize, cell: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let cell = cell.max(1);
    let coarse = Array2::from_shape_fn((rows / cell + 2, cols / cell + 2), |_| {
        rng.random_range(-1.0..=1.0f64)
    });
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let fr = r as f64 / cell as f64;
        let fc = c as f64 / cell as f64;
        let (r0, tr) = (fr.floor() as usize, fr.fract());
        let (c0, tc) = (fc.floor() as usize, fc.fract());
        coarse[[r0, c0]] * (1.0 - tr) * (1.0 - tc)
            + coarse[[r0 + 1, c0]] * tr * (1.0 - tc)
            + coarse[[r0, c0 + 1]] * (1.0 - tr) * tc
            + coarse[[r0 + 1, c0 + 1]] * tr * tc
    })
}

fn background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (fh, fw) = cfg.frame_size;
    let smooth = smooth_noise(fh, fw, 16, rng);
    let grain = Array2::from_shape_simple_fn((fh, fw), || rng.random_range(-1.0..=1.0f64));
    smooth.mapv(|v| 128.0 + cfg.background_contrast * v)
        + grain.mapv(|g| cfg.background_grain * g)
}

fn object(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (oh, ow) = cfg.object_size;
    smooth_noise(oh, ow, cfg.object_cell, rng)
        .mapv(|v| (128.0 + cfg.object_contrast * v).clamp(0.0, 255.0))
}

/// Renders a sequence. Textures come from `cfg.texture_seed`; per-frame
/// noise is drawn from `rng`.
pub fn synth_sequence<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Sequence> {
    cfg.validate()?;
    let mut tex_rng = ChaCha8Rng::seed_from_u64(cfg.texture_seed);
    let bg = background(cfg, &mut tex_rng);
    let (oh, ow) = cfg.object_size;
    let object = object(cfg, &mut tex_rng);
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut gt = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let (y, x) = cfg.position(t);
        let mut px = bg.clone();
        let (top, left) = (y.round() as usize, x.round() as usize);
        px.slice_mut(ndarray::s![top..top + oh, left..left + ow])
            .assign(&object);
        if let Some(n) = noise {
            px.mapv_inplace(|v| v + n.sample(rng));
        }
        px.mapv_inplace(|v| v.round().clamp(0.0, 255.0));
        frames.push(Image::from_gray(px));
        gt.push(BoundingBox::new(x, y, ow as f64, oh as f64)?);
    }
    Sequence::new(cfg.name.clone(), frames, gt)
}

/// Parameters of a benchmark suite of synthetic sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub count: usize,
    pub frames: usize,
    /// Peak speed (pixels/frame) ranges linearly over the suite.
    pub speed: (f64, f64),
    /// Period of the oscillating sequences (every odd index).
    pub period: f64,
    /// Template for everything else; name, velocity, motion and texture seed
    /// are overwritten per sequence.
    pub base: SynthConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            count: 10,
            frames: 100,
            speed: (0.5, 2.0),
            period: 40.0,
            base: SynthConfig::default(),
        }
    }
}

impl SuiteConfig {
    /// Configuration of sequence `i`. Its generator seed is `seed ^ i`.
    pub fn sequence_config(&self, seed: u64, i: usize) -> SynthConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
        let t = if self.count > 1 {
            i as f64 / (self.count - 1) as f64
        } else {
            0.0
        };
        let speed = self.speed.0 + (self.speed.1 - self.speed.0) * t;
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        SynthConfig {
            name: format!("synth_{i:02}"),
            velocity: (speed * heading.sin(), speed * heading.cos()),
            frames: self.frames,
            texture_seed: rng.random(),
            motion: if i % 2 == 0 {
                Motion::Linear
            } else {
                Motion::Sinusoidal {
                    period: self.period,
                }
            },
            ..self.base.clone()
        }
    }
}

/// Renders the whole suite; sequence `i` draws its noise from `seed ^ i`.
pub fn synth_suite(cfg: &SuiteConfig, seed: u64) -> Result<Vec<Sequence>> {
    if cfg.count == 0 {
        return Err(Error::Config("suite needs at least one sequence".into()));
    }
    if !(cfg.speed.0 >= 0.0 && cfg.speed.1 >= cfg.speed.0 && cfg.speed.1.is_finite()) {
        return Err(Error::Config("suite speed range must satisfy 0 <= lo <= hi".into()));
    }
    (0..cfg.count)
        .map(|i| {
            let seq_cfg = cfg.sequence_config(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64((seed ^ i as u64).wrapping_add(0x9e37_79b9));
            synth_sequence(&seq_cfg, &mut rng)
        })
        .collect()
}
