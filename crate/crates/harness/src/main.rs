use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semcode_core::transceiver::{decode_image, encode_image, pass_channel, PipelineConfig, Quantization, TransmissionFrame};
use semcode_core::metrics::quality;
use semcode_harness::bench::{run_bench, BenchOptions};
use semcode_harness::config::{parse_snr, Settings};
use semcode_harness::corpus::{load_corpus, write_synthetic_corpus};
use semcode_harness::plot::cmd_plot;
use semcode_harness::ppm::{load_ppm, save_ppm};
use semcode_harness::sweep::{cmd_sweep, ExperimentSpec};
use semcode_harness::train::{cmd_train, load_codebook, load_transform, read_bytes, write_bytes, Codebook, TrainOptions, Transform};
use semcode_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "semcode", version, about = "Semantic token coding for simulated wireless image links")]
struct Cli {
    /// Flat key = value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; falls back to the config file, then SEMCODE_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Models {
    /// Analysis transform written by `train`.
    #[arg(long)]
    transform: Option<PathBuf>,
    /// Codebook written by `train` (needed for vector quantization).
    #[arg(long)]
    codebook: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the analysis transform (and optionally a VQ codebook) from a corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        patch_size: Option<usize>,
        #[arg(long)]
        token_dim: Option<usize>,
        /// Also train a codebook with this many centroids.
        #[arg(long)]
        codebook_size: Option<usize>,
        #[arg(long)]
        codebook_out: Option<PathBuf>,
        /// Transform output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode one image into a frame file.
    Encode {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        models: Models,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a frame file back into an image.
    Decode {
        #[arg(long)]
        frame: PathBuf,
        #[command(flatten)]
        models: Models,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode, pass through the configured channel, decode and report quality.
    Transmit {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        models: Models,
        #[arg(long)]
        budget: Option<usize>,
        /// Channel SNR in dB, or `inf` for a noiseless link.
        #[arg(long, value_parser = snr_arg)]
        snr_db: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the budget × SNR grid over a corpus and write a CSV.
    Sweep {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        models: Models,
        /// Comma-separated token budgets.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        /// Comma-separated SNRs in dB.
        #[arg(long, value_delimiter = ',', value_parser = snr_arg)]
        snrs: Option<Vec<f64>>,
        /// Run cells one after another instead of in parallel.
        #[arg(long)]
        serial: bool,
        /// Record per-row wall time (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw an SVG line chart from a sweep CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "cbr")]
        x: String,
        #[arg(long, default_value = "psnr_db")]
        y: String,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the attention forward pass with and without token merging.
    Bench {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        transform: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long, default_value_t = 8)]
        merges_per_stage: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        /// Control run: no merging in either arm.
        #[arg(long)]
        no_merge: bool,
    },
    /// Write a procedural PPM corpus.
    GenCorpus {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 224)]
        width: usize,
        #[arg(long, default_value_t = 224)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn snr_arg(s: &str) -> std::result::Result<f64, String> {
    parse_snr(s).ok_or_else(|| format!("not an SNR: {s:?}"))
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| HarnessError::Config(format!("{what} not given (flag or config key)")))
}

fn load_models(settings: &Settings, models: &Models) -> Result<(Transform, Option<Codebook>)> {
    let t = load_transform(&required(models.transform.clone().or(settings.transform.clone()), "transform")?)?;
    let cb = match models.codebook.clone().or(settings.codebook.clone()) {
        Some(p) => Some(load_codebook(&p)?),
        None if matches!(settings.pipeline.quantization, Quantization::Vq { .. }) => {
            return Err(HarnessError::Config("vector quantization needs --codebook".into()))
        }
        None => None,
    };
    Ok((t, cb))
}

fn print_trial(cfg: &PipelineConfig, frame: &TransmissionFrame) {
    let r = &frame.rate;
    println!("tokens: {}", frame.token_count(cfg).unwrap_or(0));
    println!("analog symbols: {}", r.k_analog);
    println!("side info: {} bits", r.side_info_bits);
    println!("cbr: {} ({:.6})", r.cbr, r.cbr_f64());
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let seed = settings.resolve_seed(cli.seed)?;
    let mut cfg = settings.pipeline.clone();
    cfg.channel.seed = seed;
    match cli.command {
        Command::Train { corpus, patch_size, token_dim, codebook_size, codebook_out, out } => {
            let k = codebook_size.or(match cfg.quantization {
                Quantization::Vq { k, .. } => Some(k),
                _ => None,
            });
            let opts = TrainOptions {
                patch_size: patch_size.unwrap_or(cfg.patch_size),
                token_dim: token_dim.unwrap_or(cfg.token_dim),
                codebook_size: k,
                kmeans_iters: settings.kmeans_iters,
                seed,
            };
            if k.is_some() && codebook_out.is_none() {
                return Err(HarnessError::Config("codebook training needs --codebook-out".into()));
            }
            let corpus = required(corpus.or(settings.corpus.clone()), "corpus")?;
            let summary = cmd_train(&corpus, &opts, &out, codebook_out.as_deref())?;
            if summary.zero_variance() {
                eprintln!("warning: training patches have zero variance; the transform only encodes the mean");
            }
            print!("{summary}");
        }
        Command::Encode { image, models, budget, out } => {
            let (t, cb) = load_models(&settings, &models)?;
            if let Some(b) = budget {
                cfg.token_budget = b;
            }
            let frame = encode_image(&load_ppm(&image)?, &cfg, &t, cb.as_ref())?;
            write_bytes(&out, &frame.to_bytes()?)?;
            print_trial(&cfg, &frame);
        }
        Command::Decode { frame, models, out } => {
            let (t, cb) = load_models(&settings, &models)?;
            let f = TransmissionFrame::from_bytes(&read_bytes(&frame)?, cfg.patch_size, cfg.bits_per_symbol)?;
            save_ppm(&decode_image(&f, &cfg, &t, cb.as_ref())?, &out)?;
        }
        Command::Transmit { image, models, budget, snr_db, out } => {
            let (t, cb) = load_models(&settings, &models)?;
            if let Some(b) = budget {
                cfg.token_budget = b;
            }
            if let Some(s) = snr_db {
                cfg.channel.snr_db = s;
            }
            let img = load_ppm(&image)?;
            let frame = encode_image(&img, &cfg, &t, cb.as_ref())?;
            let received = pass_channel::<f64>(&frame, &cfg)?;
            let rec = decode_image(&received, &cfg, &t, cb.as_ref())?;
            save_ppm(&rec, &out)?;
            print_trial(&cfg, &frame);
            let q = quality(&img, &rec)?;
            println!("psnr: {:.4} dB", q.psnr_db);
            println!("ssim: {:.6}", q.ssim);
        }
        Command::Sweep { corpus, models, budgets, snrs, serial, timing, out } => {
            let (t, cb) = load_models(&settings, &models)?;
            let spec = ExperimentSpec {
                corpus: required(corpus.or(settings.corpus.clone()), "corpus")?,
                budgets: budgets.unwrap_or(settings.budgets.clone()),
                snrs: snrs.unwrap_or(settings.snrs.clone()),
                pipeline: cfg,
                seed,
                parallel: settings.parallel && !serial,
                record_wall_time: settings.record_wall_time || timing,
            };
            let result = cmd_sweep(&spec, &t, cb.as_ref(), &out)?;
            for row in result.failures() {
                if let Err(e) = &row.outcome {
                    eprintln!("warning: {} budget {} snr {}: {e}", row.image, row.budget, row.snr_db);
                }
            }
            println!("{} rows written to {}", result.rows.len(), out.display());
        }
        Command::Plot { csv, x, y, group_by, out } => {
            let series = cmd_plot(&csv, &x, &y, group_by.as_deref(), &out)?;
            println!("{} series written to {}", series.len(), out.display());
        }
        Command::Bench { corpus, transform, iterations, warmup, merges_per_stage, heads, no_merge } => {
            let t = load_transform(&required(transform.or(settings.transform.clone()), "transform")?)?;
            let images: Vec<_> = load_corpus(&required(corpus.or(settings.corpus.clone()), "corpus")?)?
                .into_iter()
                .map(|(_, img)| img)
                .collect();
            let opts = BenchOptions {
                iterations,
                warmup,
                merges_per_stage,
                n_stages: cfg.n_stages,
                n_heads: heads,
                seed,
                merge: !no_merge,
            };
            print!("{}", run_bench(&images, &t, &opts)?);
        }
        Command::GenCorpus { count, width, height, out } => {
            let paths = write_synthetic_corpus(&out, count, width, height, seed)?;
            println!("{} images written to {}", paths.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
