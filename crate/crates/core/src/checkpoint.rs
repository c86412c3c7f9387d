//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic `DCSEGNET`                         |
//! | 4     | format version (`u32`, currently 1)      |
//! | 4     | number of channel widths `k` (`u32`)     |
//! | 4·k   | channel widths, input first (`u32` each) |
//! | 8     | parameter count `n` (`u64`)              |
//! | 8·n   | parameters as `f64`                      |
//!
//! Parameters follow layer order; within a layer the weights come first,
//! indexed `[out][in][ky][kx]`, followed by one bias per output channel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{NetArch, NetParams};

pub const MAGIC: &[u8; 8] = b"DCSEGNET";
pub const VERSION: u32 = 1;

pub fn encode(params: &NetParams) -> Vec<u8> {
    let widths = params.arch().widths();
    let mut out = Vec::with_capacity(24 + 4 * widths.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for &w in widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetParams> {
    let mut r = Reader { bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let k = r.u32()? as usize;
    if k > 1024 {
        return Err(Error::Format(format!("implausible layer count {k}")));
    }
    let widths = (0..k).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    if widths.iter().any(|&w| w > 4096) {
        return Err(Error::Format("implausible channel width".into()));
    }
    let arch = NetArch::new(widths).map_err(|e| Error::Format(e.to_string()))?;
    let n = r.u64()? as usize;
    if n != arch.param_count() {
        return Err(Error::Format(format!(
            "parameter count {n} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let data = r
        .take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !r.bytes.is_empty() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    NetParams::from_flat(arch, data)
}

pub fn save(params: &NetParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetParams> {
    decode(&fs::read(path)?)
}
