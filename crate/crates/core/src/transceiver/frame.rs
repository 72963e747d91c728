use crate::channel::{compute_cbr, RateReport};
use crate::error::{Error, Result};
use crate::reorganizer::MergePlan;
use crate::wire::{narrow, put_f32, put_u16, put_u32, Reader};

const MAGIC: &[u8; 4] = b"SCFR";
const VERSION: u16 = 1;

/// What travels on the digital link next to the analog symbols.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SideInfo {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub plan: MergePlan,
    pub sizes: Vec<usize>,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Payload {
    /// Analog tokens; the receiver multiplies by `rms`.
    Analog { rms: f32 },
    /// Scalar levels shifted by `offset` into an `SCQZ` stream.
    Levels { offset: i32, stream: Vec<u8> },
    /// Codebook indices as an `SCQZ` stream.
    Indices { stream: Vec<u8> },
}

const TAG_ANALOG: u8 = 0;
const TAG_LEVELS: u8 = 1;
const TAG_INDICES: u8 = 2;

impl SideInfo {
    /// Layout: width u16, height u16, channels u8, stage count u16, merge
    /// plan, final token count u16, sizes u16 each, payload tag u8, payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        put_u16(&mut out, narrow(self.width, "width")?);
        put_u16(&mut out, narrow(self.height, "height")?);
        out.push(narrow(self.channels, "channels")?);
        put_u16(&mut out, narrow(self.plan.stages.len(), "stage count")?);
        out.extend_from_slice(&self.plan.to_bytes()?);
        put_u16(&mut out, narrow(self.sizes.len(), "token count")?);
        for &s in &self.sizes {
            put_u16(&mut out, narrow(s, "token size")?);
        }
        match &self.payload {
            Payload::Analog { rms } => {
                out.push(TAG_ANALOG);
                put_f32(&mut out, *rms);
            }
            Payload::Levels { offset, stream } => {
                out.push(TAG_LEVELS);
                out.extend_from_slice(&offset.to_le_bytes());
                put_u32(&mut out, narrow(stream.len(), "stream length")?);
                out.extend_from_slice(stream);
            }
            Payload::Indices { stream } => {
                out.push(TAG_INDICES);
                put_u32(&mut out, narrow(stream.len(), "stream length")?);
                out.extend_from_slice(stream);
            }
        }
        Ok(out)
    }

    pub fn parse(bytes: &[u8], patch_size: usize) -> Result<Self> {
        Self::read(bytes, patch_size).map_err(|e| match e {
            Error::CorruptFrame(_) => e,
            other => Error::CorruptFrame(other.to_string()),
        })
    }

    fn read(bytes: &[u8], patch_size: usize) -> Result<Self> {
        let mut r = Reader::new(bytes, "side information");
        let width = usize::from(r.u16()?);
        let height = usize::from(r.u16()?);
        let channels = usize::from(r.u8()?);
        if width == 0 || height == 0 || width % patch_size != 0 || height % patch_size != 0 || !(channels == 1 || channels == 3) {
            return Err(Error::CorruptFrame(format!("implausible geometry {width}x{height}x{channels}")));
        }
        let n_start = (width / patch_size) * (height / patch_size);
        let n_stages = usize::from(r.u16()?);
        let plan = MergePlan::read(n_start, n_stages, &mut r)?;
        let n_tokens = usize::from(r.u16()?);
        if n_tokens != plan.n_final() {
            return Err(Error::CorruptFrame(format!("{n_tokens} tokens but the plan yields {}", plan.n_final())));
        }
        let sizes = (0..n_tokens).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
        let payload = match r.u8()? {
            TAG_ANALOG => Payload::Analog { rms: r.f32()? },
            TAG_LEVELS => {
                let offset = r.i32()?;
                let len = r.u32()? as usize;
                Payload::Levels { offset, stream: r.take(len)?.to_vec() }
            }
            TAG_INDICES => {
                let len = r.u32()? as usize;
                Payload::Indices { stream: r.take(len)?.to_vec() }
            }
            tag => return Err(Error::CorruptFrame(format!("unknown payload tag {tag}"))),
        };
        r.finish()?;
        Ok(SideInfo { width, height, channels, plan, sizes, payload })
    }
}

/// One encoded image: power-normalized analog symbols plus the digital side
/// information needed to decode them, and the rate they cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionFrame {
    pub config_digest: u64,
    pub side_info: Vec<u8>,
    pub analog: Vec<f32>,
    pub rate: RateReport,
    /// Empirical entropy (bits/symbol) of the quantized stream, when the
    /// encoder produced one. Not part of the wire format.
    pub entropy_bits: Option<f64>,
}

impl TransmissionFrame {
    pub(crate) fn assemble(
        config_digest: u64,
        side: &SideInfo,
        analog: Vec<f32>,
        bits_per_symbol: u64,
        entropy_bits: Option<f64>,
    ) -> Result<Self> {
        let side_info = side.to_bytes()?;
        let m = (side.width * side.height * side.channels) as u64;
        let rate = compute_cbr(m, analog.len() as u64, 8 * side_info.len() as u64, bits_per_symbol)?;
        Ok(TransmissionFrame { config_digest, side_info, analog, rate, entropy_bits })
    }

    /// `SCFR` container: magic, version u16, config digest u64, side-info
    /// length u32 and bytes, analog count u32, analog symbols as f32 LE.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(22 + self.side_info.len() + 4 * self.analog.len());
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, VERSION);
        out.extend_from_slice(&self.config_digest.to_le_bytes());
        put_u32(&mut out, narrow(self.side_info.len(), "side-info length")?);
        out.extend_from_slice(&self.side_info);
        put_u32(&mut out, narrow(self.analog.len(), "analog count")?);
        for &v in &self.analog {
            put_f32(&mut out, v);
        }
        Ok(out)
    }

    /// Parses a frame; the rate report is rebuilt from the side information
    /// using `patch_size` and `bits_per_symbol`.
    pub fn from_bytes(bytes: &[u8], patch_size: usize, bits_per_symbol: u64) -> Result<Self> {
        let corrupt = |e: Error| Error::CorruptFrame(e.to_string());
        let mut r = Reader::new(bytes, "frame");
        r.magic(MAGIC).map_err(corrupt)?;
        let version = r.u16().map_err(corrupt)?;
        if version != VERSION {
            return Err(Error::CorruptFrame(format!("unsupported frame version {version}")));
        }
        let config_digest = r.u64().map_err(corrupt)?;
        let side_len = r.u32().map_err(corrupt)? as usize;
        let side_info = r.take(side_len).map_err(corrupt)?.to_vec();
        let count = r.u32().map_err(corrupt)? as usize;
        if r.remaining() != 4 * count {
            return Err(Error::CorruptFrame(format!("analog payload holds {} bytes, expected {}", r.remaining(), 4 * count)));
        }
        let analog = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>().map_err(corrupt)?;
        let side = SideInfo::parse(&side_info, patch_size)?;
        let mut frame = Self::assemble(config_digest, &side, analog, bits_per_symbol, None)?;
        // keep the received bytes verbatim
        frame.side_info = side_info;
        Ok(frame)
    }
}
