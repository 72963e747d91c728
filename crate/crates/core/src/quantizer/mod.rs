//! Optional quantization: scalar rounding, k-means vector quantization and a
//! static-model arithmetic coder for the resulting symbol streams.

mod entropy;
mod scalar;
mod vq;

pub use entropy::{decode_stream, encode_stream, entropy_decode, entropy_encode, BitString, FrequencyModel, MAX_TOTAL};
pub use scalar::{scalar_dequantize, scalar_quantize};
pub use vq::{train_codebook, vq_decode, vq_encode, Codebook};

use crate::error::{Error, Result};

/// Discrete symbols over `0..alphabet`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedStream {
    pub alphabet: u32,
    pub symbols: Vec<u32>,
}

impl QuantizedStream {
    pub fn new(alphabet: u32, symbols: Vec<u32>) -> Result<Self> {
        if let Some(&symbol) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol, alphabet });
        }
        Ok(QuantizedStream { alphabet, symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Occurrence count of every symbol.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.alphabet as usize];
        for &s in &self.symbols {
            h[s as usize] += 1;
        }
        h
    }
}
