use thiserror::Error;

/// Errors raised by the coding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("origin lists do not cover patch {0}")]
    CoverageGap(usize),
    #[error("invalid merge count r={r} for {n} tokens (limit {limit})")]
    InvalidR { r: usize, n: usize, limit: usize },
    #[error("invalid merge pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("merge plan does not match token sequence: {0}")]
    PlanMismatch(String),
    #[error("quantization step must be positive")]
    NonpositiveStep,
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: u32, alphabet: u32 },
    #[error("corrupt bitstream: {0}")]
    CorruptBitstream(String),
    #[error("signal has zero power")]
    ZeroSignal,
    #[error("significance scores do not match token groups: {0}")]
    ScoreMismatch(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("corrupt frame: {0}")]
    CorruptFrame(String),
    #[error("empty symbol stream")]
    EmptyStream,
    #[error("image side {0} is smaller than the 11-pixel SSIM window")]
    TooSmall(usize),
    #[error("malformed container: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
