//! Tensor container used for model checkpoints and dataset caches.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                               |
//! |------------------|-------------------------------------------------------|
//! | 0..8             | magic `b"QLIFTNSR"`                                   |
//! | 8..12            | `u32` format version (currently 1)                    |
//! | 12..20           | `u64` header length `H` in bytes                      |
//! | 20..20+H         | UTF-8 JSON header                                     |
//! | 20+H..           | data section: raw little-endian `f64` values          |
//!
//! The header is `{"version": 1, "meta": {..}, "tensors": [..]}` where `meta`
//! is a string-to-string map (sorted by key) and each tensor entry is
//! `{"name", "dtype": "f64", "shape": [..], "offset", "length"}`. `offset`
//! and `length` are byte positions relative to the start of the data section;
//! tensors are stored back to back in header order, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::IxDyn;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QLIFTNSR";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus string metadata, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate tensor name {name}")));
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing metadata key {key}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let length = (t.len() * 8) as u64;
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: "f64".into(),
                shape: t.shape().to_vec(),
                offset,
                length,
            });
            offset += length;
        }
        let header = serde_json::to_vec(&Header {
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            // iter() walks logical row-major order whatever the memory layout
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a tensor archive (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = PREAMBLE
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..data_start])?;
        if header.version != version {
            return Err(Error::Format("header version disagrees with preamble".into()));
        }
        let data = &bytes[data_start..];
        let mut archive = TensorArchive {
            meta: header.meta,
            tensors: Vec::with_capacity(header.tensors.len()),
        };
        for e in header.tensors {
            if e.dtype != "f64" {
                return Err(Error::Format(format!("{}: unsupported dtype {}", e.name, e.dtype)));
            }
            let count: usize = e.shape.iter().product();
            let (start, len) = (e.offset as usize, e.length as usize);
            if len != count * 8 || start.checked_add(len).is_none_or(|end| end > data.len()) {
                return Err(Error::Format(format!("{}: data out of bounds", e.name)));
            }
            let values = data[start..start + len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let tensor = Tensor::from_shape_vec(IxDyn(&e.shape), values)
                .map_err(|err| Error::Format(format!("{}: {err}", e.name)))?;
            archive.push(e.name, tensor)?;
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
