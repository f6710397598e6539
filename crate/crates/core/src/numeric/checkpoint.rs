//! `SEGS` checkpoint codec.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SEGS" | version: u16 | group count: u32
//! per group: name_len: u16 | name bytes | rank: u8 | dims: u32 * rank | payload: f64 * prod(dims)
//! metadata_len: u32 | metadata: UTF-8 text
//! ```
//!
//! Round trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Result, SegError};

use super::ParamStore;

pub const MAGIC: &[u8; 4] = b"SEGS";
pub const VERSION: u16 = 1;

pub fn encode(params: &ParamStore, metadata: &str) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * 8 + metadata.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for e in params.entries() {
        let name = e.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| SegError::InvalidInput(format!("group name too long: {}", e.name)))?;
        let rank = u8::try_from(e.shape.len())
            .map_err(|_| SegError::InvalidInput(format!("rank too large: {}", e.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &d in &e.shape {
            let d = u32::try_from(d)
                .map_err(|_| SegError::InvalidInput(format!("dimension too large: {}", e.name)))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = metadata.as_bytes();
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| SegError::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ParamStore, String)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SegError::Format("bad checkpoint magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(SegError::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let groups = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..groups {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| SegError::Format("group name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| SegError::Format(format!("group `{name}` size overflows")))?;
        let payload = r.take(n.checked_mul(8).ok_or_else(|| {
            SegError::Format(format!("group `{name}` size overflows"))
        })?)?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store
            .insert(&name, &shape, values)
            .map_err(|e| SegError::Format(e.to_string()))?;
    }
    let meta_len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| SegError::Format("metadata is not UTF-8".into()))?
        .to_string();
    if r.pos != bytes.len() {
        return Err(SegError::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok((store, meta))
}

pub fn save(path: &Path, params: &ParamStore, metadata: &str) -> Result<()> {
    fs::write(path, encode(params, metadata)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamStore, String)> {
    decode(&fs::read(path)?)
}
