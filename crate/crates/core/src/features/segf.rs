//! `SEGF` feature files.
//!
//! ```text
//! "SEGF" | version: u16 | T: u32 | D: u32 | frame_period_ms: f64 | T*D f64 row-major
//! ```
//! All fields little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Result, SegError};
use crate::numeric::Matrix;
use crate::rnn::FeatureSequence;

pub const MAGIC: &[u8; 4] = b"SEGF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let m = seq.values();
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_period_ms.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], source_id: &str) -> Result<FeatureSequence> {
    if bytes.len() < HEADER_LEN {
        return Err(SegError::Format(format!("`{source_id}`: truncated feature header")));
    }
    if &bytes[..4] != MAGIC {
        return Err(SegError::Format(format!("`{source_id}`: bad feature-file magic")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(SegError::Format(format!(
            "`{source_id}`: unsupported feature-file version {version}"
        )));
    }
    let t = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let period = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| SegError::Format(format!("`{source_id}`: size overflow")))?;
    if bytes.len() != expected {
        return Err(SegError::Format(format!(
            "`{source_id}`: expected {expected} bytes for {t}x{d} features, found {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSequence::new(Matrix::from_vec(t, d, data)?, period, source_id)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_features(seq))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path)?;
    decode_features(&bytes, &path.display().to_string())
}

/// True if the file starts with the `SEGF` magic.
pub fn looks_like_features(path: &Path) -> bool {
    use std::io::Read;
    let mut head = [0u8; 4];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map(|_| &head == MAGIC)
        .unwrap_or(false)
}
