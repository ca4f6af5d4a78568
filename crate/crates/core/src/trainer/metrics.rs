//! Image quality metrics on `[0, 1]` images.

use crate::error::{Error, Result};
use crate::image::ImageField;

/// PSNR values written to CSV are capped here; exact reconstructions report +∞ in memory.
pub const PSNR_CAP_DB: f64 = 99.0;

fn check_dims(a: &ImageField, b: &ImageField) -> Result<()> {
    if (a.height(), a.width(), a.channels()) != (b.height(), b.width(), b.channels()) {
        return Err(Error::Input(format!(
            "image dims differ: {}×{}×{} vs {}×{}×{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(pred: &ImageField, target: &ImageField) -> Result<f64> {
    check_dims(pred, target)?;
    let sse: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / pred.data().len() as f64)
}

/// `10·log10(1 / MSE)` over all pixels and channels; `+∞` for identical images.
pub fn psnr(pred: &ImageField, target: &ImageField) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn cap_psnr(db: f64) -> f64 {
    db.min(PSNR_CAP_DB)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Mean SSIM over all fully-contained 11×11 Gaussian windows (σ = 1.5,
/// K1 = 0.01, K2 = 0.03, L = 1). RGB inputs are channel-averaged first.
pub fn ssim(pred: &ImageField, target: &ImageField) -> Result<f64> {
    check_dims(pred, target)?;
    if pred.height() < SSIM_WINDOW || pred.width() < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {}×{}",
            pred.height(),
            pred.width()
        )));
    }
    let (x, y) = (pred.to_gray(), target.to_gray());
    let (h, w) = (x.height(), x.width());
    let xs = x.data();
    let ys = y.data();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let taps = gaussian_taps();
    let filt = |src: &[f64]| valid_filter(src, h, w, &taps);
    let (mx, my, sxx, syy, sxy) = (filt(xs), filt(ys), filt(&xx), filt(&yy), filt(&xy));
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Separable 'valid' correlation with `taps` along both axes.
fn valid_filter(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}
