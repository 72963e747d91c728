//! Token-based semantic coding for wireless image transmission.
//!
//! The pipeline splits an image into patches, embeds each patch with a
//! learned orthonormal transform, consolidates similar tokens by bipartite
//! soft matching, optionally quantizes, and sends the result over a
//! simulated AWGN or Rayleigh link with exact bandwidth accounting.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations. Bandwidth ratios are exact rationals.

pub mod channel;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod quantizer;
pub mod reorganizer;
pub mod scalar;
pub mod tokenizer;
pub mod tokens;
pub mod transceiver;
mod wire;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Scalar;
pub use tokenizer::ImageBuffer;
pub use tokens::TokenSequence;

/// Exact channel bandwidth ratio `k / m`.
pub type Cbr = num_rational::Ratio<u64>;

pub type MatrixF32 = Matrix<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type TokenSequenceF32 = TokenSequence<f32>;
pub type TokenSequenceF64 = TokenSequence<f64>;
pub type AnalysisTransformF32 = tokenizer::AnalysisTransform<f32>;
pub type AnalysisTransformF64 = tokenizer::AnalysisTransform<f64>;
pub type AttentionStageF32 = tokenizer::AttentionStage<f32>;
pub type AttentionStageF64 = tokenizer::AttentionStage<f64>;
pub type CodebookF32 = quantizer::Codebook<f32>;
pub type CodebookF64 = quantizer::Codebook<f64>;
