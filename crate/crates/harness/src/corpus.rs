//! Image directories and a procedural stand-in corpus.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcode_core::ImageBuffer;

use crate::error::{HarnessError, Result};
use crate::ppm::{load_ppm, save_ppm};

/// `.ppm`/`.pgm` files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("ppm" | "pgm")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(HarnessError::NoCorpus(dir.to_path_buf()));
    }
    paths.sort();
    Ok(paths)
}

/// Every image in `dir` keyed by file stem.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, ImageBuffer)>> {
    list_images(dir)?
        .into_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, load_ppm(&p)?))
        })
        .collect()
}

/// Smooth color gradient, a handful of soft-edged ellipses, a faint texture
/// and a little noise. Deterministic in `seed`.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut color = || [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
    let (c0, c1) = (color(), color());
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let shapes: Vec<([f64; 3], f64, f64, f64, f64)> = (0..rng.gen_range(3..7))
        .map(|_| {
            let c = [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
            let cx = rng.gen_range(0.0..width as f64);
            let cy = rng.gen_range(0.0..height as f64);
            let rx = rng.gen_range(0.08..0.35) * width as f64;
            let ry = rng.gen_range(0.08..0.35) * height as f64;
            (c, cx, cy, rx, ry)
        })
        .collect();
    let freq = rng.gen_range(0.05..0.4);
    let amp = rng.gen_range(0.0..12.0);
    let (w, h) = (width as f64, height as f64);
    let mut samples = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let t = (((fx / w - 0.5) * dx + (fy / h - 0.5) * dy) + 0.75).clamp(0.0, 1.5) / 1.5;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = c0[c] * (1.0 - t) + c1[c] * t;
            }
            for (col, cx, cy, rx, ry) in &shapes {
                let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
                // soft edge over roughly two pixels
                let alpha = 1.0 / (1.0 + ((d.sqrt() - 1.0) * rx.min(*ry) / 1.5).exp());
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - alpha) + col[c] * alpha;
                }
            }
            let tex = amp * (fx * freq).sin() * (fy * freq * 0.7).cos();
            for v in px {
                let noise: f64 = rng.gen_range(-2.0..2.0);
                samples.push((v + tex + noise).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(width, height, 3, samples).expect("shape is consistent by construction")
}

/// Writes `count` synthetic images named `synth_000.ppm`, `synth_001.ppm`, ...
pub fn write_synthetic_corpus(dir: &Path, count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("synth_{i:03}.ppm"));
            save_ppm(&synthetic_image(width, height, crate::seed::mix(seed, &[i as u64])), &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_varied() {
        let a = synthetic_image(32, 16, 1);
        assert_eq!(a, synthetic_image(32, 16, 1));
        assert_ne!(a, synthetic_image(32, 16, 2));
        assert_eq!((a.width(), a.height(), a.channels()), (32, 16, 3));
        let distinct: std::collections::BTreeSet<u8> = a.samples().iter().copied().collect();
        assert!(distinct.len() > 20);
    }
}
