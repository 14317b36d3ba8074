//! Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
//! K2 = 0.03 and dynamic range 1, averaged over all windows that lie fully
//! inside the image.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StylerError};
use crate::image::Image;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Which signal SSIM is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimMode {
    /// ITU-R BT.601 luma.
    #[default]
    Luminance,
    /// Mean of the per-channel values.
    Rgb,
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Separable valid-mode filtering of a row-major `h × w` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    out
}

/// Mean SSIM of two planes of the same `h × w` size.
pub fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<f64> {
    if a.len() != w * h || b.len() != w * h {
        return Err(StylerError::Dimension(format!("planes must hold {w}×{h} values")));
    }
    if w < WINDOW || h < WINDOW {
        return Err(StylerError::Dimension(format!("SSIM needs at least {WINDOW}×{WINDOW} pixels, got {w}×{h}")));
    }
    let k = gaussian_kernel();
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn ssim_with(a: &Image, b: &Image, mode: SsimMode) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(StylerError::Dimension(format!(
            "SSIM of {}×{} and {}×{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    match mode {
        SsimMode::Luminance => ssim_plane(&a.luminance(), &b.luminance(), w, h),
        SsimMode::Rgb => {
            let mut sum = 0.0;
            for c in 0..3 {
                sum += ssim_plane(&a.channel(c), &b.channel(c), w, h)?;
            }
            Ok(sum / 3.0)
        }
    }
}

/// Luminance SSIM.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, SsimMode::Luminance)
}
