//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DSGN"            4 bytes magic
//! version           u32
//! entry count       u64
//! per entry:
//!   name length     u64, then UTF-8 bytes
//!   rank            u64, then rank x u64 dims
//!   data            product(dims) x f64
//! ```

use std::path::Path;

use super::{ParamSnapshot, Tensor};
use crate::error::{DsganError, Result};

pub const MAGIC: &[u8; 4] = b"DSGN";
pub const FORMAT_VERSION: u32 = 1;

impl ParamSnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(DsganError::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(DsganError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let count = r.u64()?;
        let mut snap = ParamSnapshot::default();
        for _ in 0..count {
            let name_len = r.len_prefix()?;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| DsganError::Checkpoint("entry name is not UTF-8".into()))?
                .to_string();
            let rank = r.len_prefix()?;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.len_prefix()?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| DsganError::Checkpoint(format!("{name}: shape overflow")))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| DsganError::Checkpoint("size overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if snap.entries.contains_key(&name) {
                return Err(DsganError::Checkpoint(format!("duplicate entry {name}")));
            }
            snap.entries.insert(name, Tensor::from_vec(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(DsganError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| DsganError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DsganError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DsganError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_prefix(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| DsganError::Checkpoint("length overflow".into()))
    }
}
