use std::fmt;
use std::path::Path;

use semcode_core::quantizer::train_codebook;
use semcode_core::tokenizer::{analyze, learn_analysis_transform, patchify};
use semcode_core::{ImageBuffer, Matrix};

use crate::error::{HarnessError, Result};

pub type Transform = semcode_core::AnalysisTransformF64;
pub type Codebook = semcode_core::CodebookF64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub patch_size: usize,
    pub token_dim: usize,
    pub codebook_size: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub n_images: usize,
    pub n_patches: usize,
    pub in_dim: usize,
    pub token_dim: usize,
    /// Share of total variance kept; `None` when the corpus has none.
    pub energy_captured: Option<f64>,
    pub codebook: Option<(usize, usize, f64)>,
}

impl TrainSummary {
    pub fn zero_variance(&self) -> bool {
        self.energy_captured.is_none()
    }
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images: {}", self.n_images)?;
        writeln!(f, "training patches: {}", self.n_patches)?;
        writeln!(f, "transform: {} -> {}", self.in_dim, self.token_dim)?;
        match self.energy_captured {
            Some(e) => writeln!(f, "energy captured: {:.4}%", 100.0 * e)?,
            None => writeln!(f, "energy captured: n/a (corpus has zero variance)")?,
        }
        if let Some((k, iters, distortion)) = self.codebook {
            writeln!(f, "codebook: K={k}, {iters} iterations, distortion {distortion:.6e}")?;
        }
        Ok(())
    }
}

pub struct Trained {
    pub transform: Transform,
    pub codebook: Option<Codebook>,
    pub summary: TrainSummary,
}

pub fn train(images: &[ImageBuffer], opts: &TrainOptions) -> Result<Trained> {
    let first = images.first().ok_or_else(|| HarnessError::Config("no training images".into()))?;
    let in_dim = opts.patch_size * opts.patch_size * first.channels();
    let mut patches = Matrix::zeros(0, in_dim);
    for (i, img) in images.iter().enumerate() {
        if img.channels() != first.channels() {
            return Err(HarnessError::Config(format!("image {i} has {} channels, expected {}", img.channels(), first.channels())));
        }
        let p = patchify::<f64>(img, opts.patch_size).map_err(|e| HarnessError::core(format!("image {i}"), e))?;
        for row in p.iter_rows() {
            patches.push_row(row)?;
        }
    }
    if opts.token_dim > in_dim {
        return Err(HarnessError::Config(format!("token_dim {} exceeds patch dimension {in_dim}", opts.token_dim)));
    }
    let fit = learn_analysis_transform(&patches, opts.token_dim, opts.patch_size)?;
    let energy_captured = fit.energy_captured(opts.token_dim);
    let codebook = match opts.codebook_size {
        Some(k) => {
            let tokens = analyze(&patches, &fit.transform)?.tokens;
            Some(train_codebook(&tokens, k, opts.kmeans_iters, opts.seed)?)
        }
        None => None,
    };
    let summary = TrainSummary {
        n_images: images.len(),
        n_patches: patches.rows(),
        in_dim,
        token_dim: opts.token_dim,
        energy_captured,
        codebook: codebook.as_ref().map(|cb| (cb.len(), cb.iterations, cb.distortion)),
    };
    Ok(Trained { transform: fit.transform, codebook, summary })
}

/// Trains on every image in `corpus` and writes the model files.
pub fn cmd_train(corpus: &Path, opts: &TrainOptions, transform_out: &Path, codebook_out: Option<&Path>) -> Result<TrainSummary> {
    let images: Vec<ImageBuffer> = crate::corpus::load_corpus(corpus)?.into_iter().map(|(_, img)| img).collect();
    let trained = train(&images, opts)?;
    write_bytes(transform_out, &trained.transform.to_bytes()?)?;
    if let (Some(cb), Some(path)) = (&trained.codebook, codebook_out) {
        write_bytes(path, &cb.to_bytes()?)?;
    }
    Ok(trained.summary)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub fn load_transform(path: &Path) -> Result<Transform> {
    Transform::from_bytes(&read_bytes(path)?).map_err(|e| HarnessError::core(path.display().to_string(), e))
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    Codebook::from_bytes(&read_bytes(path)?).map_err(|e| HarnessError::core(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_corpus_warns_but_trains() {
        let img = ImageBuffer::filled(32, 32, 1, 90).unwrap();
        let opts = TrainOptions { patch_size: 8, token_dim: 4, codebook_size: None, kmeans_iters: 10, seed: 0 };
        let t = train(&[img], &opts).unwrap();
        assert!(t.summary.zero_variance());
        assert_eq!(t.summary.n_patches, 16);
        assert!(t.summary.to_string().contains("zero variance"));
    }

    #[test]
    fn patch_count_and_dimension_checks() {
        let imgs: Vec<_> = (0..3).map(|s| crate::corpus::synthetic_image(32, 16, s)).collect();
        let opts = TrainOptions { patch_size: 8, token_dim: 8, codebook_size: Some(4), kmeans_iters: 10, seed: 0 };
        let t = train(&imgs, &opts).unwrap();
        assert_eq!(t.summary.n_patches, 3 * 8);
        assert_eq!(t.codebook.unwrap().len(), 4);
        let too_wide = TrainOptions { token_dim: 8 * 8 * 3 + 1, ..opts };
        assert_eq!(train(&imgs, &too_wide).err().unwrap().exit_code(), 2);
    }
}
