//! Rate × SNR × budget grids over a corpus.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use semcode_core::transceiver::{run_trial, PipelineConfig};
use semcode_core::ImageBuffer;

use crate::config::channel_at;
use crate::error::{HarnessError, Result};
use crate::seed::trial_seed;
use crate::train::{Codebook, Transform};

pub const CSV_HEADER: [&str; 9] = ["image", "budget", "snr_db", "cbr", "psnr_db", "ssim", "entropy_bits", "side_info_bits", "wall_ms"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub corpus: PathBuf,
    pub budgets: Vec<usize>,
    pub snrs: Vec<f64>,
    /// Template for every trial; budget, SNR and channel seed are overridden.
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub parallel: bool,
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub cbr: f64,
    pub k_effective: u64,
    pub m: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub entropy_bits: Option<f64>,
    pub side_info_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub image: String,
    pub budget: usize,
    pub snr_db: f64,
    /// `Err` carries the failure message; the row is still written.
    pub outcome: std::result::Result<Metrics, String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let wall = format!("{:.3}", r.wall_ms);
            let mut rec = vec![r.image.clone(), r.budget.to_string(), fmt_snr(r.snr_db)];
            match &r.outcome {
                Ok(m) => rec.extend([
                    format!("{}", m.cbr),
                    format!("{:.6}", m.psnr_db),
                    format!("{:.6}", m.ssim),
                    m.entropy_bits.map(|e| format!("{e:.6}")).unwrap_or_default(),
                    m.side_info_bits.to_string(),
                ]),
                Err(_) => rec.extend(["".into(), "".into(), "".into(), "".into(), "".into()]),
            }
            rec.push(wall);
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Mean PSNR over successful rows matching the filter.
    pub fn mean_psnr(&self, keep: impl Fn(&SweepRow) -> bool) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| keep(r))
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.psnr_db))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn validate(spec: &ExperimentSpec, images: &[(String, ImageBuffer)]) -> Result<()> {
    if spec.budgets.is_empty() || spec.snrs.is_empty() {
        return Err(HarnessError::Config("budgets and snrs must be non-empty".into()));
    }
    let p = spec.pipeline.patch_size;
    for (id, img) in images {
        let n = (img.width() / p) * (img.height() / p);
        if let Some(&b) = spec.budgets.iter().find(|&&b| b == 0 || b > n) {
            return Err(HarnessError::Config(format!("budget {b} is infeasible for {id} ({n} patches)")));
        }
    }
    Ok(())
}

fn run_cell(
    (id, img): &(String, ImageBuffer),
    budget: usize,
    snr_db: f64,
    spec: &ExperimentSpec,
    transform: &Transform,
    codebook: Option<&Codebook>,
) -> SweepRow {
    let mut cfg = spec.pipeline.clone();
    cfg.token_budget = budget;
    cfg.channel = channel_at(&cfg.channel, snr_db, trial_seed(spec.seed, id, budget, snr_db));
    let start = Instant::now();
    let outcome = run_trial(img, &cfg, transform, codebook)
        .map(|t| Metrics {
            cbr: t.rate.cbr_f64(),
            k_effective: t.rate.k_effective,
            m: t.rate.m,
            psnr_db: t.quality.psnr_db,
            ssim: t.quality.ssim,
            entropy_bits: t.entropy_bits,
            side_info_bits: t.rate.side_info_bits,
        })
        .map_err(|e| e.to_string());
    let wall_ms = if spec.record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    SweepRow { image: id.clone(), budget, snr_db, outcome, wall_ms }
}

/// Every (image, budget, snr) cell, sorted by those coordinates. Failed
/// cells are kept with their error.
pub fn run_sweep(
    images: &[(String, ImageBuffer)],
    spec: &ExperimentSpec,
    transform: &Transform,
    codebook: Option<&Codebook>,
) -> Result<SweepResult> {
    validate(spec, images)?;
    let cells: Vec<(usize, usize, f64)> = (0..images.len())
        .flat_map(|i| spec.budgets.iter().flat_map(move |&b| spec.snrs.iter().map(move |&s| (i, b, s))))
        .collect();
    let run = |&(i, b, s): &(usize, usize, f64)| run_cell(&images[i], b, s, spec, transform, codebook);
    let mut rows: Vec<SweepRow> = if spec.parallel { cells.par_iter().map(run).collect() } else { cells.iter().map(run).collect() };
    rows.sort_by(|x, y| {
        x.image
            .cmp(&y.image)
            .then(x.budget.cmp(&y.budget))
            .then(x.snr_db.total_cmp(&y.snr_db))
    });
    Ok(SweepResult { rows })
}

/// Loads the corpus, runs the grid and writes the CSV to `out`.
pub fn cmd_sweep(spec: &ExperimentSpec, transform: &Transform, codebook: Option<&Codebook>, out: &Path) -> Result<SweepResult> {
    let images = crate::corpus::load_corpus(&spec.corpus)?;
    let result = run_sweep(&images, spec, transform, codebook)?;
    std::fs::write(out, result.to_csv()?).map_err(|e| HarnessError::io(out, e))?;
    Ok(result)
}
