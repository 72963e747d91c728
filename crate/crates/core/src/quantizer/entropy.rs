//! Static-model binary arithmetic coder (32-bit integer range, bit-plus-follow
//! carry handling) and the `SCQZ` stream container.

use super::QuantizedStream;
use crate::error::{Error, Result};
use crate::wire::{narrow, put_u32, Reader};

const MAGIC: &[u8; 4] = b"SCQZ";
const CODE_BITS: u32 = 32;
const TOP: u64 = (1 << CODE_BITS) - 1;
const HALF: u64 = 1 << (CODE_BITS - 1);
const QUARTER: u64 = 1 << (CODE_BITS - 2);

/// Largest total count a model may have; keeps every symbol's interval non-empty.
pub const MAX_TOTAL: u64 = QUARTER;

/// Per-symbol counts and their cumulative table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyModel {
    counts: Vec<u32>,
    cumulative: Vec<u64>,
}

impl FrequencyModel {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::CorruptBitstream("frequency counts must be positive".into()));
        }
        let mut cumulative = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0u64;
        cumulative.push(0);
        for &c in &counts {
            acc += u64::from(c);
            cumulative.push(acc);
        }
        if acc > MAX_TOTAL {
            return Err(Error::CorruptBitstream(format!("model total {acc} exceeds {MAX_TOTAL}")));
        }
        Ok(FrequencyModel { counts, cumulative })
    }

    /// Add-one smoothed counts of the stream's own symbols.
    pub fn fit(qs: &QuantizedStream) -> Result<Self> {
        let counts = qs
            .histogram()
            .into_iter()
            .map(|c| u32::try_from(c + 1).map_err(|_| Error::InvalidDimensions("symbol count overflows u32".into())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(counts)
    }

    pub fn alphabet(&self) -> u32 {
        self.counts.len() as u32
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    pub fn probability(&self, s: u32) -> f64 {
        f64::from(self.counts[s as usize]) / self.total() as f64
    }

    /// Ideal code length of `qs` under this model, in bits.
    pub fn cross_entropy_bits(&self, qs: &QuantizedStream) -> f64 {
        qs.symbols.iter().map(|&s| -self.probability(s).log2()).sum()
    }

    fn check(&self, qs: &QuantizedStream) -> Result<()> {
        if let Some(&symbol) = qs.symbols.iter().find(|&&s| s >= self.alphabet()) {
            return Err(Error::SymbolOutOfRange { symbol, alphabet: self.alphabet() });
        }
        Ok(())
    }
}

/// Bits packed MSB-first; the tail of the last byte is zero padding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitString {
    pub bytes: Vec<u8>,
    pub n_bits: usize,
}

impl BitString {
    fn push(&mut self, bit: bool) {
        if self.n_bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.n_bits % 8);
        }
        self.n_bits += 1;
    }

    /// Bit `i`, or 0 past the end.
    fn get(&self, i: usize) -> u64 {
        if i >= self.bytes.len() * 8 {
            return 0;
        }
        u64::from((self.bytes[i / 8] >> (7 - i % 8)) & 1)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let n_bits = bytes.len() * 8;
        BitString { bytes, n_bits }
    }
}

struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitString,
}

impl Encoder {
    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    fn encode(&mut self, lo: u64, hi: u64, total: u64) {
        let range = self.high - self.low + 1;
        self.high = self.low + range * hi / total - 1;
        self.low += range * lo / total;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    fn finish(mut self) -> BitString {
        self.pending += 1;
        self.emit(self.low >= QUARTER);
        self.out
    }
}

/// Arithmetic-codes `qs` under `fm`.
pub fn entropy_encode(qs: &QuantizedStream, fm: &FrequencyModel) -> Result<BitString> {
    fm.check(qs)?;
    let mut enc = Encoder { low: 0, high: TOP, pending: 0, out: BitString::default() };
    let total = fm.total();
    for &s in &qs.symbols {
        enc.encode(fm.cumulative[s as usize], fm.cumulative[s as usize + 1], total);
    }
    Ok(enc.finish())
}

/// Decodes `n_symbols` symbols; fails on bitstreams the model could not have produced.
pub fn entropy_decode(bits: &BitString, n_symbols: usize, fm: &FrequencyModel) -> Result<QuantizedStream> {
    let total = fm.total();
    let (mut low, mut high, mut value) = (0u64, TOP, 0u64);
    let mut pos = 0usize;
    for _ in 0..CODE_BITS {
        value = (value << 1) | bits.get(pos);
        pos += 1;
    }
    let mut symbols = Vec::with_capacity(n_symbols);
    for _ in 0..n_symbols {
        let range = high - low + 1;
        if value < low || value > high {
            return Err(Error::CorruptBitstream("code value escaped the coding interval".into()));
        }
        let target = ((value - low + 1) * total - 1) / range;
        // first symbol whose upper cumulative bound exceeds the target
        let s = fm.cumulative.partition_point(|&c| c <= target) - 1;
        if s >= fm.counts.len() {
            return Err(Error::CorruptBitstream(format!("target {target} beyond model total {total}")));
        }
        high = low + range * fm.cumulative[s + 1] / total - 1;
        low += range * fm.cumulative[s] / total;
        loop {
            if high < HALF {
            } else if low >= HALF {
                low -= HALF;
                high -= HALF;
                value -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                low -= QUARTER;
                high -= QUARTER;
                value -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | bits.get(pos);
            pos += 1;
        }
        if pos > bits.n_bits + 2 * CODE_BITS as usize {
            return Err(Error::CorruptBitstream("read far past the end of the payload".into()));
        }
        symbols.push(s as u32);
    }
    QuantizedStream::new(fm.alphabet(), symbols)
}

/// Fits a model to `qs` and writes the `SCQZ` container: magic, alphabet u32,
/// symbol count u32, one u32 count per symbol, then the MSB-first payload.
pub fn encode_stream(qs: &QuantizedStream) -> Result<Vec<u8>> {
    let fm = FrequencyModel::fit(qs)?;
    let bits = entropy_encode(qs, &fm)?;
    let mut out = Vec::with_capacity(12 + 4 * fm.counts.len() + bits.bytes.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, qs.alphabet);
    put_u32(&mut out, narrow(qs.len(), "symbol count")?);
    for &c in &fm.counts {
        put_u32(&mut out, c);
    }
    out.extend_from_slice(&bits.bytes);
    Ok(out)
}

pub fn decode_stream(bytes: &[u8]) -> Result<QuantizedStream> {
    let corrupt = |e: Error| Error::CorruptBitstream(e.to_string());
    let mut r = Reader::new(bytes, "quantized stream");
    r.magic(MAGIC).map_err(corrupt)?;
    let alphabet = r.u32().map_err(corrupt)?;
    let n = r.u32().map_err(corrupt)? as usize;
    if alphabet == 0 || alphabet as usize > r.remaining() / 4 {
        return Err(Error::CorruptBitstream(format!("alphabet {alphabet} does not fit the stream")));
    }
    let counts = (0..alphabet).map(|_| r.u32()).collect::<Result<Vec<_>>>().map_err(corrupt)?;
    let fm = FrequencyModel::from_counts(counts)?;
    // add-one smoothing means the counts also pin down the symbol count
    if fm.total() != n as u64 + u64::from(alphabet) {
        return Err(Error::CorruptBitstream("symbol count disagrees with frequency table".into()));
    }
    let payload = r.take(r.remaining()).map_err(corrupt)?;
    let qs = entropy_decode(&BitString::from_bytes(payload.to_vec()), n, &fm)?;
    if qs.histogram().iter().zip(fm.counts()).any(|(&h, &c)| h + 1 != u64::from(c)) {
        return Err(Error::CorruptBitstream("decoded symbols disagree with frequency table".into()));
    }
    Ok(qs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_stream(n: usize, alphabet: u32, seed: u64) -> QuantizedStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QuantizedStream::new(alphabet, (0..n).map(|_| rng.gen_range(0..alphabet)).collect()).unwrap()
    }

    #[test]
    fn uniform_four_symbols_near_two_bits() {
        let qs = uniform_stream(10_000, 4, 1);
        let fm = FrequencyModel::from_counts(vec![1, 1, 1, 1]).unwrap();
        let bits = entropy_encode(&qs, &fm).unwrap();
        assert!((bits.n_bits as f64 - 20_000.0).abs() <= 200.0, "{}", bits.n_bits);
        assert_eq!(entropy_decode(&bits, qs.len(), &fm).unwrap(), qs);
    }

    #[test]
    fn single_symbol_alphabet() {
        let qs = QuantizedStream::new(1, vec![0; 5000]).unwrap();
        let fm = FrequencyModel::fit(&qs).unwrap();
        let bits = entropy_encode(&qs, &fm).unwrap();
        assert!(bits.n_bits <= 32);
        assert_eq!(entropy_decode(&bits, 5000, &fm).unwrap(), qs);
    }

    #[test]
    fn length_bound() {
        for (alphabet, seed) in [(2, 3), (16, 4), (256, 5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // skewed source
            let symbols = (0..20_000).map(|_| (rng.gen::<f64>().powi(3) * f64::from(alphabet)) as u32).collect();
            let qs = QuantizedStream::new(alphabet, symbols).unwrap();
            let fm = FrequencyModel::fit(&qs).unwrap();
            let bits = entropy_encode(&qs, &fm).unwrap();
            let ideal = fm.cross_entropy_bits(&qs);
            assert!(bits.n_bits as f64 <= ideal + 32.0, "{} > {ideal} + 32", bits.n_bits);
            assert!(bits.n_bits as f64 >= ideal - 1.0);
        }
    }

    #[test]
    fn out_of_range_symbol() {
        let fm = FrequencyModel::from_counts(vec![1, 1]).unwrap();
        let qs = QuantizedStream { alphabet: 4, symbols: vec![3] };
        assert_eq!(entropy_encode(&qs, &fm), Err(Error::SymbolOutOfRange { symbol: 3, alphabet: 2 }));
        assert!(QuantizedStream::new(2, vec![0, 2]).is_err());
    }

    #[test]
    fn container_roundtrip_and_corruption() {
        let qs = uniform_stream(300, 16, 8);
        let bytes = encode_stream(&qs).unwrap();
        assert_eq!(&bytes[..4], b"SCQZ");
        assert_eq!(decode_stream(&bytes).unwrap(), qs);
        assert!(matches!(decode_stream(&bytes[..10]), Err(Error::CorruptBitstream(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_stream(&bad), Err(Error::CorruptBitstream(_))));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 20;
        flipped[last] ^= 0xff;
        // a flipped payload either decodes to a different histogram or is caught
        assert!(decode_stream(&flipped).map_or(true, |q| q != qs));
        assert!(decode_stream(&[]).is_err());
    }

    #[test]
    fn empty_stream() {
        let qs = QuantizedStream::new(3, vec![]).unwrap();
        assert_eq!(decode_stream(&encode_stream(&qs).unwrap()).unwrap(), qs);
    }

    proptest! {
        #[test]
        fn roundtrip(alphabet in 1u32..300, symbols in prop::collection::vec(any::<u32>(), 0..400)) {
            let qs = QuantizedStream::new(alphabet, symbols.into_iter().map(|s| s % alphabet).collect()).unwrap();
            let fm = FrequencyModel::fit(&qs).unwrap();
            let bits = entropy_encode(&qs, &fm).unwrap();
            prop_assert_eq!(entropy_decode(&bits, qs.len(), &fm).unwrap(), qs.clone());
            prop_assert!(bits.n_bits as f64 <= fm.cross_entropy_bits(&qs) + 32.0);
        }
    }
}
