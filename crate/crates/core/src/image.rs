//! Frame storage. Pixel values are reals on the 0..=255 scale.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A frame with one (grayscale) or three (RGB) channels, stored `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>,
}

impl Image {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        let c = pixels.dim().2;
        if c != 1 && c != 3 {
            return Err(Error::Config(format!("images have 1 or 3 channels, got {c}")));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite pixel value".into()));
        }
        Ok(Self { pixels })
    }

    pub fn from_gray(gray: Array2<f64>) -> Self {
        Self {
            pixels: gray.insert_axis(Axis(2)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.pixels.dim()
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    /// Luma plane (`0.299 R + 0.587 G + 0.114 B`), or the single channel as-is.
    pub fn to_gray(&self) -> Array2<f64> {
        if self.channels() == 1 {
            return self.pixels.index_axis(Axis(2), 0).to_owned();
        }
        Array2::from_shape_fn((self.height(), self.width()), |(r, c)| {
            let (red, green, blue) = (
                self.pixels[[r, c, 0]],
                self.pixels[[r, c, 1]],
                self.pixels[[r, c, 2]],
            );
            // Exact for gray pixels, so replicated-channel files decode losslessly.
            if red == green && green == blue {
                return red;
            }
            0.299 * red + 0.587 * green + 0.114 * blue
        })
    }

    /// Grayscale crop whose top-left corner may lie outside the frame; missing
    /// pixels repeat the nearest edge pixel.
    pub fn crop_gray_replicate(&self, top: i64, left: i64, rows: usize, cols: usize) -> Array2<f64> {
        let gray = self.to_gray();
        crop_replicate(gray.view(), top, left, rows, cols)
    }

    pub fn clamp_to_range(&mut self) {
        self.pixels.mapv_inplace(|v| v.clamp(0.0, 255.0));
    }
}

pub(crate) fn crop_replicate(
    gray: ArrayView2<'_, f64>,
    top: i64,
    left: i64,
    rows: usize,
    cols: usize,
) -> Array2<f64> {
    let (h, w) = gray.dim();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        gray[[clamp(top + r as i64, h), clamp(left + c as i64, w)]]
    })
}
