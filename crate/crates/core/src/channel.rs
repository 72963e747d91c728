//! Wireless link simulation: power normalization, AWGN and block Rayleigh
//! fading with perfect CSI, significance-weighted power allocation and
//! bandwidth-ratio accounting.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real-valued channel symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector<T> {
    pub symbols: Vec<T>,
    /// Nominal average power (mean square).
    pub power: T,
}

impl<T: Scalar> SymbolVector<T> {
    pub fn new(symbols: Vec<T>) -> Self {
        let power = mean_square(&symbols);
        SymbolVector { symbols, power }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn mean_square<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(x.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub block_len: usize,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        ChannelConfig { kind: ChannelKind::Awgn, snr_db, block_len: 1, seed }
    }

    pub fn noiseless() -> Self {
        Self::awgn(f64::INFINITY, 0)
    }
}

/// Noise variance for a unit-power signal: `10^(−snr_db/10)`.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Scales `x` to unit mean square; `rms` is what the receiver multiplies by.
pub fn power_normalize<T: Scalar>(x: &[T]) -> Result<(SymbolVector<T>, T)> {
    let ms = mean_square(x);
    if !(ms > T::zero()) || !ms.is_finite() {
        return Err(Error::ZeroSignal);
    }
    let rms = ms.sqrt();
    let symbols: Vec<T> = x.iter().map(|&v| v / rms).collect();
    Ok((SymbolVector { symbols, power: T::one() }, rms))
}

pub fn denormalize<T: Scalar>(s: &[T], rms: T) -> Vec<T> {
    s.iter().map(|&v| v * rms).collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `y = s + n`, `n ~ N(0, 10^(−snr_db/10))` i.i.d.
pub fn awgn<T: Scalar>(s: &SymbolVector<T>, snr_db: f64, seed: u64) -> SymbolVector<T> {
    if snr_db == f64::INFINITY {
        return s.clone();
    }
    let sigma = noise_variance(snr_db).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = s.symbols.iter().map(|&v| v + T::lit(sigma * gaussian(&mut rng))).collect();
    SymbolVector { symbols, power: s.power }
}

/// Block fading: each run of `block_len` symbols sees one gain
/// `|h| = √(x² + y²)`, `x, y ~ N(0, ½)`, plus AWGN. Returns the per-block gains
/// (perfect CSI).
pub fn rayleigh<T: Scalar>(s: &SymbolVector<T>, snr_db: f64, block_len: usize, seed: u64) -> Result<(SymbolVector<T>, Vec<T>)> {
    if block_len == 0 {
        return Err(Error::InvalidDimensions("fading block length must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = s.len().div_ceil(block_len);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let gains: Vec<T> = (0..n_blocks)
        .map(|_| {
            let (x, y) = (half * gaussian(&mut rng), half * gaussian(&mut rng));
            T::lit((x * x + y * y).sqrt())
        })
        .collect();
    let sigma = if snr_db == f64::INFINITY { 0.0 } else { noise_variance(snr_db).sqrt() };
    let symbols = s
        .symbols
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let noise = if sigma > 0.0 { sigma * gaussian(&mut rng) } else { 0.0 };
            gains[i / block_len] * v + T::lit(noise)
        })
        .collect();
    Ok((SymbolVector { symbols, power: s.power }, gains))
}

/// Zero-forcing equalization `y / h` with known gains.
pub fn equalize<T: Scalar>(y: &[T], gains: &[T], block_len: usize) -> Vec<T> {
    y.iter().enumerate().map(|(i, &v)| v / gains[i / block_len.max(1)]).collect()
}

/// Transmits through the configured channel and equalizes, returning what
/// the receiver sees in the transmit-symbol domain.
pub fn transmit<T: Scalar>(s: &SymbolVector<T>, cfg: &ChannelConfig) -> Result<SymbolVector<T>> {
    match cfg.kind {
        ChannelKind::Awgn => Ok(awgn(s, cfg.snr_db, cfg.seed)),
        ChannelKind::Rayleigh => {
            let (y, gains) = rayleigh(s, cfg.snr_db, cfg.block_len, cfg.seed)?;
            Ok(SymbolVector { symbols: equalize(&y.symbols, &gains, cfg.block_len), power: s.power })
        }
    }
}

/// Empirical SNR in dB of `received` against the clean `sent` symbols.
pub fn estimate_snr<T: Scalar>(sent: &[T], received: &[T]) -> f64 {
    let signal: f64 = sent.iter().map(|v| v.as_f64().powi(2)).sum();
    let noise: f64 = sent.iter().zip(received).map(|(a, b)| (b.as_f64() - a.as_f64()).powi(2)).sum();
    10.0 * (signal / noise).log10()
}

/// Per-token gains `√(N·score[i])` for `n_tokens` equal-length groups.
pub fn allocation_gains<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    let total: T = scores.iter().copied().sum();
    if scores.is_empty() || (total - T::one()).abs() > T::lit(1e-6) || scores.iter().any(|&s| s < T::zero()) {
        return Err(Error::ScoreMismatch(format!("{} scores summing to {total}", scores.len())));
    }
    let n = T::from_usize_lossy(scores.len());
    Ok(scores.iter().map(|&s| (n * s).sqrt()).collect())
}

/// Scales each token's group of symbols by `√(N·score[i])`, so tokens that
/// stand for more patches get proportionally more power. Groups are
/// consecutive runs of `s.len() / scores.len()` symbols.
pub fn allocate_power<T: Scalar>(s: &SymbolVector<T>, scores: &[T]) -> Result<SymbolVector<T>> {
    let gains = allocation_gains(scores)?;
    if !s.len().is_multiple_of(scores.len()) {
        return Err(Error::ScoreMismatch(format!("{} symbols cannot split into {} groups", s.len(), scores.len())));
    }
    let group = s.len() / scores.len();
    let symbols = s.symbols.iter().enumerate().map(|(i, &v)| v * gains[i / group.max(1)]).collect();
    Ok(SymbolVector::new(symbols))
}

/// Symbol accounting for one transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateReport {
    /// Source dimension (samples).
    pub m: u64,
    pub k_analog: u64,
    pub side_info_bits: u64,
    pub bits_per_symbol: u64,
    /// `k_analog + ⌈side_info_bits / bits_per_symbol⌉`.
    pub k_effective: u64,
    /// `k_effective / m`, exact.
    pub cbr: Ratio<u64>,
}

impl RateReport {
    pub fn cbr_f64(&self) -> f64 {
        *self.cbr.numer() as f64 / *self.cbr.denom() as f64
    }
}

pub fn compute_cbr(m: u64, k_analog: u64, side_info_bits: u64, bits_per_symbol: u64) -> Result<RateReport> {
    if m == 0 || bits_per_symbol == 0 {
        return Err(Error::InvalidDimensions(format!("m = {m}, bits per symbol = {bits_per_symbol}")));
    }
    let k_effective = k_analog + side_info_bits.div_ceil(bits_per_symbol);
    Ok(RateReport { m, k_analog, side_info_bits, bits_per_symbol, k_effective, cbr: Ratio::new(k_effective, m) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn normalize_example() {
        let (s, rms) = power_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((rms - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((s.symbols[0] - 3.0 / 12.5f64.sqrt()).abs() < 1e-12);
        assert!((mean_square(&s.symbols) - 1.0).abs() < 1e-9);
        let back = denormalize(&s.symbols, rms);
        assert!((back[0] - 3.0).abs() < 1e-9 && (back[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn unit_power_scale_is_one() {
        let (_, rms) = power_normalize(&[1.0f64, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(rms, 1.0);
        assert_eq!(power_normalize::<f64>(&[0.0, 0.0]).unwrap_err(), Error::ZeroSignal);
        assert_eq!(power_normalize::<f64>(&[]).unwrap_err(), Error::ZeroSignal);
    }

    #[test]
    fn noise_variance_at_six_db() {
        assert!((noise_variance(6.0) - 0.251_188_643).abs() < 1e-8);
    }

    #[test]
    fn infinite_snr_is_transparent() {
        let s = SymbolVector::new(vec![0.5f64, -1.0, 1.3]);
        assert_eq!(awgn(&s, f64::INFINITY, 4), s);
        let (y, gains) = rayleigh(&s, f64::INFINITY, 2, 4).unwrap();
        let eq = equalize(&y.symbols, &gains, 2);
        for (a, b) in eq.iter().zip(&s.symbols) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(gains.len(), 2);
    }

    #[test]
    fn fixed_seed_fixed_realization() {
        let s = SymbolVector::new(vec![1.0f32; 64]);
        assert_eq!(awgn(&s, 3.0, 9), awgn(&s, 3.0, 9));
        assert_ne!(awgn(&s, 3.0, 9), awgn(&s, 3.0, 10));
        assert_eq!(rayleigh(&s, 3.0, 8, 2).unwrap(), rayleigh(&s, 3.0, 8, 2).unwrap());
        assert!(rayleigh(&s, 3.0, 0, 2).is_err());
    }

    #[test]
    fn empirical_snr_tracks_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw: Vec<f64> = (0..200_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, _) = power_normalize(&raw).unwrap();
        let y = awgn(&s, 6.0, 2);
        assert!((estimate_snr(&s.symbols, &y.symbols) - 6.0).abs() < 0.1);
    }

    #[test]
    fn allocation() {
        let s = SymbolVector::new(vec![1.0f64, -1.0, 1.0, -1.0]);
        let same = allocate_power(&s, &[0.5, 0.5]).unwrap();
        assert_eq!(same.symbols, s.symbols);
        let skew = allocate_power(&s, &[0.75, 0.25]).unwrap();
        assert!((skew.symbols[0] - 1.5f64.sqrt()).abs() < 1e-12);
        assert!((skew.symbols[2] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((mean_square(&skew.symbols) - 1.0).abs() < 1e-6);
        let single = allocate_power(&s, &[1.0]).unwrap();
        assert_eq!(single.symbols, s.symbols);
        assert!(matches!(allocate_power(&s, &[0.5, 0.6]), Err(Error::ScoreMismatch(_))));
        assert!(matches!(allocate_power(&s, &[0.2, 0.3, 0.5]), Err(Error::ScoreMismatch(_))));
    }

    #[test]
    fn cbr_levels() {
        let r = compute_cbr(150_528, 6272, 0, 2).unwrap();
        assert_eq!(r.cbr, Ratio::new(1, 24));
        assert!((r.cbr_f64() - 0.0417).abs() < 5e-5);
        assert_eq!(compute_cbr(100, 100, 0, 2).unwrap().cbr, Ratio::from_integer(1));
        let low = compute_cbr(150_528, 3131, 0, 2).unwrap();
        assert!((low.cbr_f64() - 0.0208).abs() < 5e-5);
        let side = compute_cbr(1000, 10, 7, 2).unwrap();
        assert_eq!(side.k_effective, 14);
        assert!(compute_cbr(0, 1, 0, 2).is_err());
        assert!(compute_cbr(1, 1, 0, 0).is_err());
    }
}
