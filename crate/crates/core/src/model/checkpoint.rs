//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "BVAECKPT"
//! version      u32       1
//! header_len   u32
//! header       JSON      {"checkpoint_id", "profile", "metadata"}
//! array_count  u32
//! per array:
//!   name_len   u16, name (UTF-8)
//!   dtype      u8        1 = f32
//!   ndim       u8, dims  ndim × u64
//!   payload    product(dims) × f32, row-major
//! ```
//!
//! `checkpoint_id` is the first 16 hex digits of a SHA-256 over every
//! array's name, shape and payload, and is verified on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::train::{EpochRecord, TrainConfig};
use super::{ArchitectureProfile, Vae};
use crate::error::{CheckpointError, Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"BVAECKPT";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// Seed used for weight initialization.
    pub init_seed: u64,
    pub train: Option<TrainConfig>,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub profile: ArchitectureProfile,
    pub metadata: TrainingMetadata,
    pub arrays: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    checkpoint_id: String,
    profile: ArchitectureProfile,
    metadata: TrainingMetadata,
}

impl ModelCheckpoint {
    pub fn from_model(vae: &Vae<f32>, metadata: TrainingMetadata) -> Self {
        let arrays = vae
            .params()
            .into_iter()
            .map(|p| NamedArray {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect();
        ModelCheckpoint {
            profile: vae.profile().clone(),
            metadata,
            arrays,
        }
    }

    /// Rebuilds the network. Every parameter of the profile's architecture
    /// must be present with the right shape, and nothing else.
    pub fn to_model(&self) -> Result<Vae<f32>> {
        let mut vae = Vae::new(self.profile.clone(), self.metadata.init_seed)?;
        let mut by_name: std::collections::HashMap<&str, &NamedArray> =
            self.arrays.iter().map(|a| (a.name.as_str(), a)).collect();
        for p in vae.params_mut() {
            let a = by_name
                .remove(p.name.as_str())
                .ok_or_else(|| CheckpointError::MissingArray(p.name.clone()))?;
            if a.shape != p.value.shape() {
                return Err(CheckpointError::ShapeDisagreement {
                    name: a.name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: a.shape.clone(),
                }
                .into());
            }
            p.value = Tensor::new(a.shape.clone(), a.data.clone())?;
        }
        if let Some(extra) = self
            .arrays
            .iter()
            .find(|a| by_name.contains_key(a.name.as_str()))
        {
            return Err(CheckpointError::UnexpectedArray(extra.name.clone()).into());
        }
        vae.mark_statistics();
        Ok(vae)
    }

    pub fn param_count(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.arrays {
            h.update((a.name.len() as u64).to_le_bytes());
            h.update(a.name.as_bytes());
            for &d in &a.shape {
                h.update((d as u64).to_le_bytes());
            }
            for v in &a.data {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            checkpoint_id: self.id(),
            profile: self.profile.clone(),
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(64 + header.len() + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            let expected: usize = a.shape.iter().product();
            if expected != a.data.len() {
                return Err(Error::DataLength {
                    shape: a.shape.clone(),
                    found: a.data.len(),
                });
            }
            let name_len = u16::try_from(a.name.len())
                .map_err(|_| Error::InvalidArgument(format!("array name too long: {}", a.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(DTYPE_F32);
            out.push(a.shape.len() as u8);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            }
            .into());
        }
        let header_len = r.u32("header length")? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let count = r.u32("array count")?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.array("array name length")?) as usize;
            let name = std::str::from_utf8(r.take(name_len, "array name")?)
                .map_err(|e| CheckpointError::Header(format!("array name: {e}")))?
                .to_string();
            let [dtype] = r.array("dtype")?;
            if dtype != DTYPE_F32 {
                return Err(CheckpointError::Dtype(dtype).into());
            }
            let [ndim] = r.array("rank")?;
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(r.array("dims")?) as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| CheckpointError::Header(format!("array `{name}` too large")))?;
            let payload = r.take(len, "array payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Header(format!(
                "{} trailing bytes after the last array",
                bytes.len() - r.pos
            ))
            .into());
        }
        let ckpt = ModelCheckpoint {
            profile: header.profile,
            metadata: header.metadata,
            arrays,
        };
        let id = ckpt.id();
        if id != header.checkpoint_id {
            return Err(CheckpointError::Header(format!(
                "checkpoint id {} does not match array contents ({id})",
                header.checkpoint_id
            ))
            .into());
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated { what })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}
