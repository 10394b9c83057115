//! Perturbation size (L1) and visibility (SSIM) measures.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    /// Mean over pixels of the channel-summed absolute difference.
    pub l1_mean: f64,
    pub ssim_percent: f64,
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable Gaussian filter over the fully covered ("valid") region.
fn filter_valid(img: &Array2<f64>, k: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let rows: Array2<f64> = Array2::from_shape_fn((h, ow), |(r, c)| {
        (0..SSIM_WINDOW).map(|j| k[j] * img[[r, c + j]]).sum::<f64>()
    });
    Array2::from_shape_fn((oh, ow), |(r, c)| {
        (0..SSIM_WINDOW).map(|i| k[i] * rows[[r + i, c]]).sum::<f64>()
    })
}

/// Mean structural similarity of two grayscale planes, as a percentage.
pub fn ssim_gray(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        let (ah, aw) = a.dim();
        let (bh, bw) = b.dim();
        return Err(Error::ShapeMismatch {
            expected: (ah, aw, 1),
            actual: (bh, bw, 1),
        });
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Degenerate(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let k = gaussian_kernel();
    let mu_a = filter_valid(&a.to_owned(), &k);
    let mu_b = filter_valid(&b.to_owned(), &k);
    let e_aa = filter_valid(&a.mapv(|v| v * v), &k);
    let e_bb = filter_valid(&b.mapv(|v| v * v), &k);
    let ab = Zip::from(&a).and(&b).map_collect(|&x, &y| x * y);
    let e_ab = filter_valid(&ab, &k);

    let mut total = 0.0;
    let mut count = 0usize;
    Zip::from(&mu_a)
        .and(&mu_b)
        .and(&e_aa)
        .and(&e_bb)
        .and(&e_ab)
        .for_each(|&ma, &mb, &saa, &sbb, &sab| {
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (var_a + var_b + C2);
            total += num / den;
            count += 1;
        });
    Ok(100.0 * total / count as f64)
}

/// SSIM (percent) of the grayscale versions of two images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_gray(a.to_gray().view(), b.to_gray().view())
}

/// Mean over pixels of the channel-summed `|perturbed - clean|`.
pub fn l1_sparsity(clean: &Image, perturbed: &Image) -> Result<f64> {
    if clean.dims() != perturbed.dims() {
        return Err(Error::ShapeMismatch {
            expected: clean.dims(),
            actual: perturbed.dims(),
        });
    }
    let total: f64 = Zip::from(clean.pixels())
        .and(perturbed.pixels())
        .fold(0.0, |acc, &a, &b| acc + (b - a).abs());
    Ok(total / (clean.height() * clean.width()) as f64)
}

/// Percentage reduction from `clean` to `attacked`.
pub fn drop_percent(clean: f64, attacked: f64) -> Result<f64> {
    if !(clean > 0.0) {
        return Err(Error::Degenerate(format!(
            "drop percentage needs a positive clean score, got {clean}"
        )));
    }
    Ok(100.0 * (clean - attacked) / clean)
}
