//! Full-reference image quality (MSE, PSNR, SSIM) and empirical entropy.

use crate::error::{Error, Result};
use crate::quantizer::QuantizedStream;
use crate::tokenizer::ImageBuffer;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

fn same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

/// BT.601 luma for color images, the samples themselves for gray.
pub fn luma(img: &ImageBuffer) -> Vec<f64> {
    match img.channels() {
        1 => img.samples().iter().map(|&v| f64::from(v)).collect(),
        _ => img
            .samples()
            .chunks_exact(img.channels())
            .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
            .collect(),
    }
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filter.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-contained 11×11 Gaussian windows (σ = 1.5) of the
/// luma planes.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w.min(h) < WINDOW {
        return Err(Error::TooSmall(w.min(h)));
    }
    let (x, y) = (luma(a), luma(b));
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = blur(&x, w, h, &k);
    let my = blur(&y, w, h, &k);
    let sxx = blur(&xx, w, h, &k);
    let syy = blur(&yy, w, h, &k);
    let sxy = blur(&xy, w, h, &k);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + C1) * (2.0 * cov + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .sum();
    Ok(total / n as f64)
}

pub fn quality(reference: &ImageBuffer, test: &ImageBuffer) -> Result<QualityReport> {
    let mse = mse(reference, test)?;
    Ok(QualityReport { mse, psnr_db: psnr_from_mse(mse), ssim: ssim(reference, test)? })
}

/// `−Σ p̂ log₂ p̂` over observed symbol frequencies, in bits per symbol.
pub fn empirical_entropy(qs: &QuantizedStream) -> Result<f64> {
    if qs.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = qs.len() as f64;
    Ok(qs
        .histogram()
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, f: impl Fn(usize) -> u8) -> ImageBuffer {
        ImageBuffer::new(w, h, c, (0..w * h * c).map(f).collect()).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = img(4, 4, 1, |_| 0);
        let b = img(4, 4, 1, |_| 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let c = img(4, 4, 1, |i| (i * 13 % 256) as u8);
        assert_eq!(mse(&a, &c).unwrap(), mse(&c, &a).unwrap());
        assert!(mse(&a, &img(4, 4, 3, |_| 0)).is_err());
    }

    #[test]
    fn psnr_values() {
        assert!((psnr_from_mse(1.0) - 48.130_803_6).abs() < 1e-6);
        assert_eq!(psnr_from_mse(0.0), PSNR_CAP_DB);
        assert!(psnr_from_mse(255.0 * 255.0).abs() < 1e-12);
        assert!(psnr_from_mse(2.0) < psnr_from_mse(1.0));
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = img(20, 16, 3, |i| (i * 31 % 251) as u8);
        let b = img(20, 16, 3, |i| (i * 17 % 241) as u8);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert_eq!(ssim(&img(10, 20, 1, |_| 0), &img(10, 20, 1, |_| 0)), Err(Error::TooSmall(10)));
    }

    #[test]
    fn entropy_closed_forms() {
        let uniform = QuantizedStream::new(4, vec![0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        assert!((empirical_entropy(&uniform).unwrap() - 2.0).abs() < 1e-12);
        let constant = QuantizedStream::new(4, vec![2; 9]).unwrap();
        assert_eq!(empirical_entropy(&constant).unwrap(), 0.0);
        let skew = QuantizedStream::new(3, vec![0, 0, 1, 2]).unwrap();
        assert!((empirical_entropy(&skew).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(empirical_entropy(&QuantizedStream::new(3, vec![]).unwrap()), Err(Error::EmptyStream));
    }
}
