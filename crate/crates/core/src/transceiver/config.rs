use sha2::{Digest, Sha256};

use crate::channel::{ChannelConfig, ChannelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMethod {
    Bipartite,
    Knn { k: usize },
}

/// Which attention features drive the matching when attention is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionFeature {
    Keys,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub n_heads: usize,
    pub seed: u64,
    pub feature: AttentionFeature,
}

/// How quantized indices reach the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VqTransport {
    /// Entropy-coded indices on the error-free digital link.
    Digital,
    /// Centroid vectors as analog symbols; the receiver snaps to the codebook.
    Analog,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantization {
    None,
    Scalar { step: f64 },
    Vq { k: usize, transport: VqTransport },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub token_dim: usize,
    pub token_budget: usize,
    pub n_stages: usize,
    pub merge: MergeMethod,
    pub attention: Option<AttentionConfig>,
    pub quantization: Quantization,
    pub power_allocation: bool,
    pub channel: ChannelConfig,
    pub bits_per_symbol: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_size: 16,
            token_dim: 64,
            token_budget: 30,
            n_stages: 12,
            merge: MergeMethod::Bipartite,
            attention: None,
            quantization: Quantization::None,
            power_allocation: true,
            channel: ChannelConfig { kind: ChannelKind::Awgn, snr_db: 6.0, block_len: 1, seed: 0 },
            bits_per_symbol: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDimensions(msg));
        if self.patch_size == 0 || self.token_dim == 0 {
            return bad("patch size and token dimension must be positive".into());
        }
        if self.token_budget == 0 {
            return bad("token budget must be at least 1".into());
        }
        if self.n_stages == 0 && self.merge == MergeMethod::Bipartite {
            return bad("bipartite merging needs at least one stage".into());
        }
        if self.bits_per_symbol == 0 {
            return bad("bits per symbol must be positive".into());
        }
        if self.channel.block_len == 0 {
            return bad("fading block length must be ≥ 1".into());
        }
        if let MergeMethod::Knn { k: 0 } = self.merge {
            return bad("k-NN merging needs k ≥ 1".into());
        }
        if let Some(att) = &self.attention {
            if att.n_heads == 0 || !self.token_dim.is_multiple_of(att.n_heads) {
                return bad(format!("{} heads do not divide token dimension {}", att.n_heads, self.token_dim));
            }
            if self.merge != MergeMethod::Bipartite {
                return bad("attention-guided merging requires bipartite matching".into());
            }
        }
        match self.quantization {
            Quantization::Scalar { step } if !(step > 0.0) => Err(Error::NonpositiveStep),
            Quantization::Vq { k: 0, .. } => bad("codebook size must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Fingerprint of every setting the decoder depends on.
    pub fn digest(&self) -> u64 {
        let quant = match self.quantization {
            Quantization::None => "none".to_string(),
            Quantization::Scalar { step } => format!("scalar:{:016x}", step.to_bits()),
            Quantization::Vq { k, transport } => format!("vq:{k}:{transport:?}"),
        };
        let desc = format!(
            "semcode/1;patch={};dim={};quant={quant};alloc={}",
            self.patch_size, self.token_dim, self.power_allocation
        );
        let hash = Sha256::digest(desc.as_bytes());
        u64::from_le_bytes(hash[..8].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn digest_tracks_decoder_settings() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.token_budget = 10;
        b.channel.snr_db = 0.0;
        assert_eq!(a.digest(), b.digest());
        b.quantization = Quantization::Scalar { step: 0.5 };
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn rejects_inconsistent() {
        let mut c = PipelineConfig { token_budget: 0, ..Default::default() };
        assert!(c.validate().is_err());
        c.token_budget = 4;
        c.attention = Some(AttentionConfig { n_heads: 5, seed: 0, feature: AttentionFeature::Keys });
        assert!(c.validate().is_err());
        c.attention = None;
        c.quantization = Quantization::Scalar { step: 0.0 };
        assert_eq!(c.validate(), Err(Error::NonpositiveStep));
    }
}
