//! Flat `key = value` configuration files.

use std::path::{Path, PathBuf};

use semcode_core::channel::{ChannelConfig, ChannelKind};
use semcode_core::transceiver::{AttentionConfig, AttentionFeature, MergeMethod, PipelineConfig, Quantization, VqTransport};

use crate::error::{HarnessError, Result};

/// Everything a config file can set. Unset keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub transform: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub budgets: Vec<usize>,
    pub snrs: Vec<f64>,
    pub parallel: bool,
    pub record_wall_time: bool,
    pub kmeans_iters: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            pipeline: PipelineConfig::default(),
            seed: None,
            corpus: None,
            transform: None,
            codebook: None,
            budgets: vec![10, 30],
            snrs: vec![6.0],
            parallel: true,
            record_wall_time: false,
            kmeans_iters: 50,
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("line {line}: {msg}"))
}

fn parse_num<N: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<N> {
    v.parse().map_err(|_| bad(line, format_args!("{key}: cannot parse {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, format_args!("{key}: expected on/off, got {v:?}"))),
    }
}

pub fn parse_snr(v: &str) -> Option<f64> {
    match v.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "noiseless" => Some(f64::INFINITY),
        s => s.parse().ok().filter(|x: &f64| !x.is_nan()),
    }
}

fn parse_list<N>(line: usize, key: &str, v: &str, item: impl Fn(&str) -> Option<N>) -> Result<Vec<N>> {
    let out: Option<Vec<N>> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect();
    match out {
        Some(list) if !list.is_empty() => Ok(list),
        _ => Err(bad(line, format_args!("{key}: expected a non-empty comma-separated list, got {v:?}"))),
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        // quantization pieces may arrive in any order
        let mut quant = "none".to_string();
        let mut step = 0.05;
        let mut k = 256;
        let mut transport = VqTransport::Digital;
        let mut attention = false;
        let mut att = AttentionConfig { n_heads: 4, seed: 0, feature: AttentionFeature::Keys };
        let mut knn_k = 4;
        let mut merge = "bipartite".to_string();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| bad(line, format_args!("expected key = value, got {content:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            let p = &mut s.pipeline;
            match key {
                "patch_size" => p.patch_size = parse_num(line, key, v)?,
                "token_dim" => p.token_dim = parse_num(line, key, v)?,
                "token_budget" => p.token_budget = parse_num(line, key, v)?,
                "n_stages" => p.n_stages = parse_num(line, key, v)?,
                "merge" => merge = v.to_ascii_lowercase(),
                "knn_k" => knn_k = parse_num(line, key, v)?,
                "attention" => attention = parse_bool(line, key, v)?,
                "attention_heads" => att.n_heads = parse_num(line, key, v)?,
                "attention_seed" => att.seed = parse_num(line, key, v)?,
                "attention_feature" => {
                    att.feature = match v.to_ascii_lowercase().as_str() {
                        "keys" => AttentionFeature::Keys,
                        "hidden" => AttentionFeature::Hidden,
                        _ => return Err(bad(line, format_args!("attention_feature: expected keys or hidden, got {v:?}"))),
                    }
                }
                "quantization" => quant = v.to_ascii_lowercase(),
                "quant_step" => step = parse_num(line, key, v)?,
                "codebook_size" => k = parse_num(line, key, v)?,
                "vq_transport" => {
                    transport = match v.to_ascii_lowercase().as_str() {
                        "digital" => VqTransport::Digital,
                        "analog" => VqTransport::Analog,
                        _ => return Err(bad(line, format_args!("vq_transport: expected digital or analog, got {v:?}"))),
                    }
                }
                "power_allocation" => p.power_allocation = parse_bool(line, key, v)?,
                "channel" => {
                    p.channel.kind = match v.to_ascii_lowercase().as_str() {
                        "awgn" => ChannelKind::Awgn,
                        "rayleigh" => ChannelKind::Rayleigh,
                        _ => return Err(bad(line, format_args!("channel: expected awgn or rayleigh, got {v:?}"))),
                    }
                }
                "snr_db" => p.channel.snr_db = parse_snr(v).ok_or_else(|| bad(line, format_args!("snr_db: cannot parse {v:?}")))?,
                "block_len" => p.channel.block_len = parse_num(line, key, v)?,
                "bits_per_symbol" => p.bits_per_symbol = parse_num(line, key, v)?,
                "seed" => s.seed = Some(parse_num(line, key, v)?),
                "corpus" => s.corpus = Some(PathBuf::from(v)),
                "transform" => s.transform = Some(PathBuf::from(v)),
                "codebook" => s.codebook = Some(PathBuf::from(v)),
                "budgets" => s.budgets = parse_list(line, key, v, |x| x.parse().ok())?,
                "snrs" => s.snrs = parse_list(line, key, v, parse_snr)?,
                "parallel" => s.parallel = parse_bool(line, key, v)?,
                "record_wall_time" => s.record_wall_time = parse_bool(line, key, v)?,
                "kmeans_iters" => s.kmeans_iters = parse_num(line, key, v)?,
                _ => return Err(bad(line, format_args!("unknown key {key:?}"))),
            }
        }

        let p = &mut s.pipeline;
        p.merge = match merge.as_str() {
            "bipartite" => MergeMethod::Bipartite,
            "knn" => MergeMethod::Knn { k: knn_k },
            other => return Err(HarnessError::Config(format!("merge: expected bipartite or knn, got {other:?}"))),
        };
        p.attention = attention.then_some(att);
        p.quantization = match quant.as_str() {
            "none" => Quantization::None,
            "scalar" => Quantization::Scalar { step },
            "vq" => Quantization::Vq { k, transport },
            other => return Err(HarnessError::Config(format!("quantization: expected none, scalar or vq, got {other:?}"))),
        };
        p.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Explicit value, then the config file, then `SEMCODE_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(seed) = flag.or(self.seed) {
            return Ok(seed);
        }
        match std::env::var("SEMCODE_SEED") {
            Ok(v) => v.trim().parse().map_err(|_| HarnessError::Config(format!("SEMCODE_SEED: cannot parse {v:?}"))),
            Err(_) => Ok(0),
        }
    }
}

/// The noiseless-or-AWGN channel a row of a sweep uses.
pub fn channel_at(base: &ChannelConfig, snr_db: f64, seed: u64) -> ChannelConfig {
    ChannelConfig { snr_db, seed, ..*base }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let s = Settings::parse("# nothing here\n\n").unwrap();
        assert_eq!(s, Settings::default());
    }

    #[test]
    fn full_file() {
        let s = Settings::parse(
            "patch_size = 8\ntoken_dim=32 # inline comment\nquantization = vq\ncodebook_size = 16\nvq_transport = analog\n\
             snrs = 0, 6, inf\nbudgets = 10,30,100\nchannel = rayleigh\nblock_len = 4\nattention = on\nattention_heads = 2\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(s.pipeline.patch_size, 8);
        assert_eq!(s.pipeline.quantization, Quantization::Vq { k: 16, transport: VqTransport::Analog });
        assert_eq!(s.snrs, vec![0.0, 6.0, f64::INFINITY]);
        assert_eq!(s.budgets, vec![10, 30, 100]);
        assert_eq!(s.pipeline.channel.kind, ChannelKind::Rayleigh);
        assert_eq!(s.pipeline.attention.unwrap().n_heads, 2);
        assert_eq!(s.resolve_seed(None).unwrap(), 9);
        assert_eq!(s.resolve_seed(Some(3)).unwrap(), 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Settings::parse("patch_size = 8\nbogus = 1\n").unwrap_err();
        assert_eq!(err.to_string(), "config error: line 2: unknown key \"bogus\"");
        assert_eq!(err.exit_code(), 2);
        assert!(Settings::parse("token_dim = -3").is_err());
        assert!(Settings::parse("no equals sign").is_err());
        assert!(Settings::parse("budgets = ").is_err());
        assert!(Settings::parse("quantization = scalar\nquant_step = 0").is_err());
        assert!(Settings::parse("attention = on\nattention_heads = 5").is_err());
    }
}
