//! Patch partition, learned linear analysis/synthesis and an optional toy
//! self-attention stage.

mod attention;
mod transform;

pub use attention::{attention_forward, AttentionLayer, AttentionStage};
pub use transform::{analyze, learn_analysis_transform, synthesize, AnalysisTransform, PcaFit};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Interleaved 8-bit raster image, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height} image")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidDimensions(format!("{channels} channels")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                samples.len()
            )));
        }
        Ok(ImageBuffer { width, height, channels, samples })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    /// Source dimension `m` used in bandwidth ratios.
    pub fn dimension(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.samples[(y * self.width + x) * self.channels + c]
    }
}

fn check_geometry(width: usize, height: usize, patch_size: usize) -> Result<()> {
    if patch_size == 0 || !width.is_multiple_of(patch_size) || !height.is_multiple_of(patch_size) {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} is not divisible into {patch_size}x{patch_size} patches"
        )));
    }
    Ok(())
}

/// Splits an image into raster-ordered `p×p` patches scaled to `[0, 1]`.
///
/// Each row holds one patch, pixels in row-major order with channels
/// interleaved, so its length is `p²·channels`.
pub fn patchify<T: Scalar>(img: &ImageBuffer, patch_size: usize) -> Result<Matrix<T>> {
    check_geometry(img.width, img.height, patch_size)?;
    let p = patch_size;
    let (gw, gh) = (img.width / p, img.height / p);
    let dim = p * p * img.channels;
    let scale = T::lit(255.0);
    let mut data = Vec::with_capacity(gw * gh * dim);
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..p {
                let start = ((py * p + y) * img.width + px * p) * img.channels;
                let line = &img.samples[start..start + p * img.channels];
                data.extend(line.iter().map(|&v| T::lit(f64::from(v)) / scale));
            }
        }
    }
    Matrix::from_vec(gw * gh, dim, data)
}

/// Inverse of [`patchify`]; values are clamped to `[0, 1]` and rounded to 8 bits.
pub fn unpatchify<T: Scalar>(
    patches: &Matrix<T>,
    width: usize,
    height: usize,
    channels: usize,
    patch_size: usize,
) -> Result<ImageBuffer> {
    check_geometry(width, height, patch_size)?;
    let p = patch_size;
    let (gw, gh) = (width / p, height / p);
    if patches.rows() != gw * gh || patches.cols() != p * p * channels {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} patch matrix for {gw}x{gh} patches of length {}",
            patches.rows(),
            patches.cols(),
            p * p * channels
        )));
    }
    let mut samples = vec![0u8; width * height * channels];
    for py in 0..gh {
        for px in 0..gw {
            let patch = patches.row(py * gw + px);
            for y in 0..p {
                let start = ((py * p + y) * width + px * p) * channels;
                let src = &patch[y * p * channels..(y + 1) * p * channels];
                for (dst, &v) in samples[start..start + p * channels].iter_mut().zip(src) {
                    *dst = to_u8(v);
                }
            }
        }
    }
    ImageBuffer::new(width, height, channels, samples)
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    let x = v.as_f64();
    if x.is_nan() {
        return 0;
    }
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}
