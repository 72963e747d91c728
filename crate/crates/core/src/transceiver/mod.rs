//! End-to-end semantic transmission: encode an image into a frame, push the
//! analog part through a channel, decode, and score the result.

mod config;
mod frame;

pub use config::{AttentionConfig, AttentionFeature, MergeMethod, PipelineConfig, Quantization, VqTransport};
pub use frame::TransmissionFrame;

use frame::{Payload, SideInfo};

use crate::channel::{allocation_gains, transmit, RateReport, SymbolVector};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{empirical_entropy, quality, QualityReport};
use crate::quantizer::{decode_stream, encode_stream, scalar_dequantize, scalar_quantize, vq_decode, vq_encode, Codebook, QuantizedStream};
use crate::reorganizer::{build_schedule, knn_merge, reorganize, unmerge, MergePlan, SimilaritySource};
use crate::scalar::Scalar;
use crate::tokenizer::{analyze, patchify, synthesize, unpatchify, AnalysisTransform, AttentionStage, ImageBuffer};
use crate::tokens::TokenSequence;

fn check_models<T: Scalar>(cfg: &PipelineConfig, transform: &AnalysisTransform<T>, codebook: Option<&Codebook<T>>) -> Result<()> {
    cfg.validate()?;
    if transform.patch_size != cfg.patch_size || transform.out_dim != cfg.token_dim {
        return Err(Error::DimensionMismatch(format!(
            "transform is p={} d={}, config expects p={} d={}",
            transform.patch_size, transform.out_dim, cfg.patch_size, cfg.token_dim
        )));
    }
    if let Quantization::Vq { k, .. } = cfg.quantization {
        let cb = codebook.ok_or_else(|| Error::InsufficientData("vector quantization needs a codebook".into()))?;
        if cb.len() != k || cb.dim() != cfg.token_dim {
            return Err(Error::DimensionMismatch(format!(
                "codebook is {}×{}, config expects {k}×{}",
                cb.len(),
                cb.dim(),
                cfg.token_dim
            )));
        }
    }
    Ok(())
}

fn compact<T: Scalar>(ts: &TokenSequence<T>, cfg: &PipelineConfig) -> Result<(TokenSequence<T>, MergePlan)> {
    if cfg.token_budget > ts.len() {
        return Err(Error::Infeasible(format!("budget {} exceeds {} patches", cfg.token_budget, ts.len())));
    }
    match cfg.merge {
        config::MergeMethod::Knn { k } => knn_merge(ts, k, cfg.token_budget),
        config::MergeMethod::Bipartite => {
            let schedule = build_schedule(ts.len(), cfg.token_budget, cfg.n_stages)?;
            match cfg.attention {
                None => reorganize(ts, &schedule, SimilaritySource::Tokens),
                Some(att) => {
                    let stage = AttentionStage::new(cfg.n_stages, att.n_heads, cfg.token_dim / att.n_heads, att.seed)?;
                    let source = match att.feature {
                        AttentionFeature::Keys => SimilaritySource::Keys(&stage),
                        AttentionFeature::Hidden => SimilaritySource::Hidden(&stage),
                    };
                    reorganize(ts, &schedule, source)
                }
            }
        }
    }
}

/// Per-token latent-to-symbol gains before the global normalization.
fn token_gains<T: Scalar>(sizes: &[usize], allocate: bool) -> Result<Vec<T>> {
    if !allocate {
        return Ok(vec![T::one(); sizes.len()]);
    }
    let n_patches = sizes.iter().sum::<usize>().max(1);
    let scores: Vec<T> = sizes.iter().map(|&s| T::from_usize_lossy(s) / T::from_usize_lossy(n_patches)).collect();
    allocation_gains(&scores)
}

/// Weights each token by its allocation gain, then scales everything to unit
/// mean square. An all-zero latent is sent as zeros with `rms = 0`.
fn to_symbols<T: Scalar>(latents: &Matrix<T>, gains: &[T]) -> (Vec<f32>, f32) {
    let mut weighted = Vec::with_capacity(latents.as_slice().len());
    for (row, &g) in latents.iter_rows().zip(gains) {
        weighted.extend(row.iter().map(|&v| v * g));
    }
    let ms = crate::channel::mean_square(&weighted);
    if ms == T::zero() {
        return (vec![0.0; weighted.len()], 0.0);
    }
    let rms = ms.sqrt();
    (weighted.iter().map(|&v| (v / rms).as_f32()).collect(), rms.as_f32())
}

fn from_symbols<T: Scalar>(analog: &[f32], rms: f32, gains: &[T], dim: usize) -> Result<Matrix<T>> {
    if analog.len() != gains.len() * dim {
        return Err(Error::CorruptFrame(format!("{} analog symbols for {} tokens of width {dim}", analog.len(), gains.len())));
    }
    let rms = T::lit(f64::from(rms));
    let data = analog
        .iter()
        .enumerate()
        .map(|(i, &v)| T::lit(f64::from(v)) * rms / gains[i / dim])
        .collect();
    Matrix::from_vec(gains.len(), dim, data)
}

/// Tokenizes, compacts to the token budget, optionally quantizes, and maps
/// the result to channel symbols plus side information.
pub fn encode_image<T: Scalar>(
    img: &ImageBuffer,
    cfg: &PipelineConfig,
    transform: &AnalysisTransform<T>,
    codebook: Option<&Codebook<T>>,
) -> Result<TransmissionFrame> {
    check_models(cfg, transform, codebook)?;
    if img.channels() * cfg.patch_size * cfg.patch_size != transform.in_dim {
        return Err(Error::DimensionMismatch(format!(
            "{}-channel image for a transform over {} samples per patch",
            img.channels(),
            transform.in_dim
        )));
    }
    let patches = patchify::<T>(img, cfg.patch_size)?;
    let tokens = analyze(&patches, transform)?;
    let (merged, plan) = compact(&tokens, cfg)?;
    let gains = token_gains::<T>(&merged.sizes, cfg.power_allocation)?;

    let (payload, analog, entropy_bits) = match cfg.quantization {
        Quantization::None => {
            let (analog, rms) = to_symbols(&merged.tokens, &gains);
            (Payload::Analog { rms }, analog, None)
        }
        Quantization::Scalar { step } => {
            let levels = scalar_quantize(merged.tokens.as_slice(), T::lit(step))?;
            let lo = levels.iter().copied().min().unwrap_or(0);
            let hi = levels.iter().copied().max().unwrap_or(0);
            let offset = i32::try_from(lo).map_err(|_| Error::InvalidDimensions("quantized level exceeds i32".into()))?;
            let alphabet = u32::try_from(hi - lo + 1).map_err(|_| Error::InvalidDimensions("level range exceeds u32".into()))?;
            let qs = QuantizedStream::new(alphabet, levels.iter().map(|&q| (q - lo) as u32).collect())?;
            let entropy = empirical_entropy(&qs).ok();
            (Payload::Levels { offset, stream: encode_stream(&qs)? }, Vec::new(), entropy)
        }
        Quantization::Vq { transport, .. } => {
            let cb = codebook.expect("checked above");
            let qs = vq_encode(&merged.tokens, cb)?;
            let entropy = empirical_entropy(&qs).ok();
            match transport {
                VqTransport::Digital => (Payload::Indices { stream: encode_stream(&qs)? }, Vec::new(), entropy),
                VqTransport::Analog => {
                    let (analog, rms) = to_symbols(&vq_decode(&qs, cb)?, &gains);
                    (Payload::Analog { rms }, analog, entropy)
                }
            }
        }
    };
    let side = SideInfo { width: img.width(), height: img.height(), channels: img.channels(), plan, sizes: merged.sizes, payload };
    TransmissionFrame::assemble(cfg.digest(), &side, analog, cfg.bits_per_symbol, entropy_bits)
}

/// Receiver: undoes the symbol mapping, dequantizes, broadcasts merged tokens
/// back to their patches and synthesizes the image.
pub fn decode_image<T: Scalar>(
    frame: &TransmissionFrame,
    cfg: &PipelineConfig,
    transform: &AnalysisTransform<T>,
    codebook: Option<&Codebook<T>>,
) -> Result<ImageBuffer> {
    check_models(cfg, transform, codebook)?;
    if frame.config_digest != cfg.digest() {
        return Err(Error::CorruptFrame("frame was encoded with different decoder settings".into()));
    }
    let side = SideInfo::parse(&frame.side_info, cfg.patch_size)?;
    if side.channels * cfg.patch_size * cfg.patch_size != transform.in_dim {
        return Err(Error::CorruptFrame(format!("{}-channel frame for this transform", side.channels)));
    }
    let origin = side.plan.replay_origins();
    if origin.iter().map(Vec::len).ne(side.sizes.iter().copied()) {
        return Err(Error::CorruptFrame("token sizes disagree with the merge plan".into()));
    }
    let n = side.sizes.len();
    let dim = cfg.token_dim;
    let gains = token_gains::<T>(&side.sizes, cfg.power_allocation)?;
    let stream_err = |e: Error| Error::CorruptFrame(e.to_string());

    let tokens = match (&side.payload, cfg.quantization) {
        (Payload::Analog { rms }, Quantization::None) => from_symbols(&frame.analog, *rms, &gains, dim)?,
        (Payload::Analog { rms }, Quantization::Vq { transport: VqTransport::Analog, .. }) => {
            let cb = codebook.expect("checked above");
            let received = from_symbols(&frame.analog, *rms, &gains, dim)?;
            vq_decode(&vq_encode(&received, cb)?, cb)?
        }
        (Payload::Levels { offset, stream }, Quantization::Scalar { step }) => {
            let qs = decode_stream(stream).map_err(stream_err)?;
            if qs.len() != n * dim {
                return Err(Error::CorruptFrame(format!("{} levels for {n} tokens", qs.len())));
            }
            let levels: Vec<i64> = qs.symbols.iter().map(|&s| i64::from(*offset) + i64::from(s)).collect();
            Matrix::from_vec(n, dim, scalar_dequantize(&levels, T::lit(step))?)?
        }
        (Payload::Indices { stream }, Quantization::Vq { transport: VqTransport::Digital, .. }) => {
            let cb = codebook.expect("checked above");
            let qs = decode_stream(stream).map_err(stream_err)?;
            if qs.len() != n || qs.alphabet as usize != cb.len() {
                return Err(Error::CorruptFrame(format!("{} indices over {} codes for {n} tokens", qs.len(), qs.alphabet)));
            }
            vq_decode(&qs, cb)?
        }
        _ => return Err(Error::CorruptFrame("payload kind does not match the quantization mode".into())),
    };
    let merged = TokenSequence { tokens, sizes: side.sizes, origin };
    let full = unmerge(&merged, &side.plan)?;
    let patches = synthesize(&full, transform)?;
    unpatchify(&patches, side.width, side.height, side.channels, cfg.patch_size)
}

impl TransmissionFrame {
    /// Gain from latent value to transmitted symbol for every analog symbol:
    /// a perturbation `δ` on symbol `i` moves the received latent by
    /// `δ / gain[i]`.
    pub fn symbol_gains<T: Scalar>(&self, cfg: &PipelineConfig) -> Result<Vec<T>> {
        let side = SideInfo::parse(&self.side_info, cfg.patch_size)?;
        let Payload::Analog { rms } = side.payload else {
            return Ok(Vec::new());
        };
        let gains = token_gains::<T>(&side.sizes, cfg.power_allocation)?;
        let rms = T::lit(f64::from(rms));
        Ok((0..self.analog.len()).map(|i| gains[i / cfg.token_dim] / rms).collect())
    }

    /// Number of tokens the frame carries.
    pub fn token_count(&self, cfg: &PipelineConfig) -> Result<usize> {
        Ok(SideInfo::parse(&self.side_info, cfg.patch_size)?.sizes.len())
    }
}

/// Pushes a frame's analog symbols through `cfg.channel`; side information is
/// carried error-free.
pub fn pass_channel<T: Scalar>(frame: &TransmissionFrame, cfg: &PipelineConfig) -> Result<TransmissionFrame> {
    let mut received = frame.clone();
    if frame.analog.is_empty() {
        return Ok(received);
    }
    let sent = SymbolVector::new(frame.analog.iter().map(|&v| T::lit(f64::from(v))).collect());
    let y = transmit(&sent, &cfg.channel)?;
    received.analog = y.symbols.iter().map(|v| v.as_f32()).collect();
    Ok(received)
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub rate: RateReport,
    pub quality: QualityReport,
    pub entropy_bits: Option<f64>,
    pub reconstruction: ImageBuffer,
}

/// Encode, channel, decode, score. Deterministic in `(img, cfg)`.
pub fn run_trial<T: Scalar>(
    img: &ImageBuffer,
    cfg: &PipelineConfig,
    transform: &AnalysisTransform<T>,
    codebook: Option<&Codebook<T>>,
) -> Result<TrialOutcome> {
    let frame = encode_image(img, cfg, transform, codebook)?;
    let received = pass_channel::<T>(&frame, cfg)?;
    let reconstruction = decode_image(&received, cfg, transform, codebook)?;
    Ok(TrialOutcome {
        rate: frame.rate,
        quality: quality(img, &reconstruction)?,
        entropy_bits: frame.entropy_bits,
        reconstruction,
    })
}
