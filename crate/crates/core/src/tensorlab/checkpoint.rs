//! The `VDC1` checkpoint container.
//!
//! Layout: the 4-byte magic `VDC1`, then entries until end of file. Each
//! entry is
//!
//! ```text
//! name_len: u32 LE | name: UTF-8 | dtype: u8 | rank: u8 | extents: rank x u64 LE | values LE
//! ```
//!
//! with dtype `0` = u8, `1` = f32, `2` = f64. Entries are written in name
//! order, so equal contents always produce equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VDC1";

/// Storage precision for floating-point entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    fn dtype(&self) -> u8 {
        match self {
            Payload::U8(_) => 0,
            Payload::F32(_) => 1,
            Payload::F64(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::U8(v) => v.len(),
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_tensor(&mut self, name: impl Into<String>, t: &Tensor, precision: Precision) {
        let payload = match precision {
            Precision::F64 => Payload::F64(t.data().to_vec()),
            Precision::F32 => Payload::F32(t.data().iter().map(|&v| v as f32).collect()),
        };
        self.entries.insert(name.into(), Entry {
            shape: t.shape().to_vec(),
            payload,
        });
    }

    pub fn insert_text(&mut self, name: impl Into<String>, text: &str) {
        let bytes = text.as_bytes().to_vec();
        self.entries.insert(name.into(), Entry {
            shape: vec![bytes.len()],
            payload: Payload::U8(bytes),
        });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entry(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    /// Floating-point entry widened to `f64`.
    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let e = self.entry(name)?;
        let data = match &e.payload {
            Payload::F64(v) => v.clone(),
            Payload::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Payload::U8(_) => return Err(Error::Format(format!("entry `{name}` is not floating point"))),
        };
        Tensor::new(&e.shape, data)
    }

    pub fn text(&self, name: &str) -> Result<String> {
        match &self.entry(name)?.payload {
            Payload::U8(b) => String::from_utf8(b.clone())
                .map_err(|_| Error::Format(format!("entry `{name}` is not UTF-8"))),
            _ => Err(Error::Format(format!("entry `{name}` is not text"))),
        }
    }

    /// Copy every entry whose name starts with `prefix` from `other`.
    pub fn extend_from(&mut self, other: &Checkpoint, prefix: &str) {
        for (k, v) in &other.entries {
            if k.starts_with(prefix) {
                self.entries.insert(k.clone(), v.clone());
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for (name, e) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(e.payload.dtype());
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &e.payload {
                Payload::U8(v) => out.extend_from_slice(v),
                Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected VDC1".into()));
        }
        let mut entries = BTreeMap::new();
        while r.pos < bytes.len() {
            let name_len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
                shape.push(usize::try_from(d).map_err(|_| Error::Format("extent overflow".into()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format("extent overflow".into()))?;
            let payload = match dtype {
                0 => Payload::U8(r.take(n)?.to_vec()),
                1 => Payload::F32(
                    r.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                2 => Payload::F64(
                    r.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                d => return Err(Error::Format(format!("unknown dtype code {d} for `{name}`"))),
            };
            debug_assert_eq!(payload.len(), n);
            entries.insert(name, Entry { shape, payload });
        }
        Ok(Self { entries })
    }

    /// Write atomically: temp file in the same directory, fsync, rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized bytes.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
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
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}
