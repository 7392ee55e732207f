//! Named parameter arrays with a fixed little-endian layout:
//!
//! ```text
//! "BNASCKPT"                      8 bytes
//! version                         u32
//! entry count                     u32
//! per entry:
//!   name length                   u16
//!   name                          UTF-8
//!   rank                          u32
//!   dims                          u32 × rank
//!   payload                       f32 × product(dims)
//! metadata length                 u32
//! metadata                        JSON {template, code, seed, precision}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archspace::{ExpansionCode, Precision};
use crate::io_util;
use crate::nn::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BNASCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub template: String,
    pub code: ExpansionCode,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Self {
            meta,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::Input(format!("entry name too long ({} bytes)", name.len())));
        }
        if self.get(&name).is_some() {
            return Err(Error::Input(format!("duplicate checkpoint entry {name:?}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, not a checkpoint"));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(8, format!("unsupported format version {version}")));
        }
        let count = r.u32("entry count")?;
        let mut entries: Vec<(String, Tensor)> = Vec::new();
        for _ in 0..count {
            let at = r.pos;
            let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len, "entry name")?)
                .map_err(|_| Error::format(at as u64 + 2, "entry name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank == 0 {
                return Err(Error::format(r.pos as u64 - 4, format!("entry {name:?} has rank 0")));
            }
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                let d = r.u32("dimension")? as usize;
                if d == 0 {
                    return Err(Error::format(r.pos as u64 - 4, format!("entry {name:?} has a zero dimension")));
                }
                dims.push(d);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::format(r.pos as u64, "payload size overflows"))?;
            let payload = r.take(n, "payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if entries.iter().any(|(n, _)| *n == name) {
                return Err(Error::format(at as u64, format!("duplicate entry {name:?}")));
            }
            entries.push((name, Tensor::new(&dims, data)?));
        }
        let meta_at = r.pos as u64;
        let meta_len = r.u32("metadata length")? as usize;
        let meta = r.take(meta_len, "metadata")?;
        let meta: CheckpointMeta = serde_json::from_slice(meta)
            .map_err(|e| Error::format(meta_at + 4, format!("metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after metadata"));
        }
        Ok(Self { meta, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&io_util::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated: {what} needs {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
