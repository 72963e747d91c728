//! Forward-pass throughput with and without token merging.

use std::fmt;
use std::time::Instant;

use semcode_core::reorganizer::{merged_forward, MergeSchedule};
use semcode_core::tokenizer::{analyze, patchify};
use semcode_core::{AttentionStageF64, ImageBuffer};

use crate::error::{HarnessError, Result};
use crate::train::Transform;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub iterations: usize,
    pub warmup: usize,
    pub merges_per_stage: usize,
    pub n_stages: usize,
    pub n_heads: usize,
    pub seed: u64,
    /// When false both arms run unmerged (control).
    pub merge: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { iterations: 100, warmup: 5, merges_per_stage: 8, n_stages: 12, n_heads: 4, seed: 0, merge: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub iterations: usize,
    pub median_unmerged_s: f64,
    pub median_merged_s: f64,
    pub counts_unmerged: Vec<usize>,
    pub counts_merged: Vec<usize>,
}

impl BenchReport {
    pub fn images_per_sec_unmerged(&self) -> f64 {
        1.0 / self.median_unmerged_s
    }

    pub fn images_per_sec_merged(&self) -> f64 {
        1.0 / self.median_merged_s
    }

    pub fn speedup(&self) -> f64 {
        self.median_unmerged_s / self.median_merged_s
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "iterations: {}", self.iterations)?;
        writeln!(f, "unmerged: {:.3} ms median, {:.1} images/s", 1e3 * self.median_unmerged_s, self.images_per_sec_unmerged())?;
        writeln!(f, "merged:   {:.3} ms median, {:.1} images/s", 1e3 * self.median_merged_s, self.images_per_sec_merged())?;
        writeln!(f, "speedup:  {:.3}x", self.speedup())?;
        writeln!(f, "tokens per stage (unmerged): {:?}", self.counts_unmerged)?;
        writeln!(f, "tokens per stage (merged):   {:?}", self.counts_merged)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Times patchify + analysis + the attention stack on each image in turn.
/// The two arms alternate iteration by iteration so drift hits both equally.
pub fn run_bench(images: &[ImageBuffer], transform: &Transform, opts: &BenchOptions) -> Result<BenchReport> {
    if images.is_empty() {
        return Err(HarnessError::Config("benchmark needs at least one image".into()));
    }
    if opts.iterations == 0 || opts.n_heads == 0 || !transform.out_dim.is_multiple_of(opts.n_heads) {
        return Err(HarnessError::Config(format!(
            "{} iterations with {} heads over width {}",
            opts.iterations, opts.n_heads, transform.out_dim
        )));
    }
    let stage = AttentionStageF64::new(opts.n_stages, opts.n_heads, transform.out_dim / opts.n_heads, opts.seed)?;
    let plain = MergeSchedule::constant(0, opts.n_stages);
    let merged = if opts.merge { MergeSchedule::constant(opts.merges_per_stage, opts.n_stages) } else { plain.clone() };
    let forward = |img: &ImageBuffer, schedule: &MergeSchedule| -> Result<(f64, Vec<usize>)> {
        let start = Instant::now();
        let tokens = analyze(&patchify::<f64>(img, transform.patch_size)?, transform)?;
        let (hidden, counts) = merged_forward(&tokens, schedule, &stage)?;
        std::hint::black_box(hidden);
        Ok((start.elapsed().as_secs_f64(), counts))
    };
    for i in 0..opts.warmup {
        let img = &images[i % images.len()];
        forward(img, &plain)?;
        forward(img, &merged)?;
    }
    let (mut t_plain, mut t_merged) = (Vec::new(), Vec::new());
    let (mut counts_unmerged, mut counts_merged) = (Vec::new(), Vec::new());
    for i in 0..opts.iterations {
        let img = &images[i % images.len()];
        let (a, ca) = forward(img, &plain)?;
        let (b, cb) = forward(img, &merged)?;
        t_plain.push(a);
        t_merged.push(b);
        counts_unmerged = ca;
        counts_merged = cb;
    }
    Ok(BenchReport {
        iterations: opts.iterations,
        median_unmerged_s: median(t_plain),
        median_merged_s: median(t_merged),
        counts_unmerged,
        counts_merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
