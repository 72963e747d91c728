//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::path::Path;

use semcode_core::ImageBuffer;
use thiserror::Error;

use crate::error::{HarnessError, Result};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpmError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated raster: {got} of {expected} bytes")]
    Truncated { got: usize, expected: usize },
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_blank(&mut self) {
        while let Some(&c) = self.buf.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.buf.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, PpmError> {
        self.skip_blank();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::MalformedHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PpmError::MalformedHeader(format!("{what} out of range")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<ImageBuffer, PpmError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', d]) if (b'1'..=b'7').contains(d) => {
            return Err(PpmError::UnsupportedFormat(format!("P{} netpbm variant", *d as char)))
        }
        _ => return Err(PpmError::MalformedHeader("missing P5/P6 magic".into())),
    };
    let mut h = Header { buf: bytes, pos: 2 };
    if !h.buf.get(h.pos).is_some_and(|c| c.is_ascii_whitespace() || *c == b'#') {
        return Err(PpmError::MalformedHeader("magic must be followed by whitespace".into()));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::MalformedHeader(format!("{width}x{height} image")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PpmError::MalformedHeader(format!("maxval {maxval}")));
    }
    if maxval != 255 {
        return Err(PpmError::UnsupportedFormat(format!("maxval {maxval} (only 255 is supported)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !h.buf.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PpmError::MalformedHeader("no whitespace after maxval".into()));
    }
    let start = h.pos + 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PpmError::MalformedHeader("dimensions overflow".into()))?;
    let raster = &bytes[start.min(bytes.len())..];
    if raster.len() < expected {
        return Err(PpmError::Truncated { got: raster.len(), expected });
    }
    ImageBuffer::new(width, height, channels, raster[..expected].to_vec())
        .map_err(|e| PpmError::MalformedHeader(e.to_string()))
}

pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.samples());
    out
}

pub fn load_ppm(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_pnm(&bytes).map_err(|source| HarnessError::Image { path: path.to_path_buf(), source })
}

pub fn save_ppm(img: &ImageBuffer, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pnm(img)).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_p6() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 1, 3));
        assert_eq!(img.samples(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(encode_pnm(&img), bytes);
    }

    #[test]
    fn comments_anywhere_in_header() {
        let mut bytes = b"P5 # gray\n# made by hand\n3 # width\n1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.samples(), &[9, 8, 7]);
        assert_eq!(img.channels(), 1);
    }

    #[test]
    fn raster_may_start_with_whitespace_bytes() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(b"\n ");
        assert_eq!(decode_pnm(&bytes).unwrap().samples(), b"\n ");
    }

    #[test]
    fn rejects() {
        assert!(matches!(decode_pnm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(PpmError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P3\n1 1\n255\n1 2 3"), Err(PpmError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P4\n1 1\n\0"), Err(PpmError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P6\n2 x\n255\n"), Err(PpmError::MalformedHeader(_))));
        assert!(matches!(decode_pnm(b"JUNK"), Err(PpmError::MalformedHeader(_))));
        assert!(matches!(decode_pnm(b"P6\n0 1\n255\n"), Err(PpmError::MalformedHeader(_))));
        assert_eq!(decode_pnm(b"P5\n2 2\n255\n\x01\x02"), Err(PpmError::Truncated { got: 2, expected: 4 }));
        assert!(matches!(decode_pnm(b"P5\n2 2\n255"), Err(PpmError::MalformedHeader(_))));
    }
}
