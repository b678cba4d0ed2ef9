//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"MOODCKPT" | u32 version | u32 header_len | header JSON
//! u32 array_count
//! per array: u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data[prod(dims)]
//! ```
//!
//! The header carries the [`ModelConfig`] and a [`CheckpointMeta`]. Arrays are
//! written in [`Parameters::named_arrays`] order and validated against the
//! config on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Parameters, Result};
use crate::tokenizer::TokenizerConfig;

pub const MAGIC: &[u8; 8] = b"MOODCKPT";
pub const VERSION: u32 = 1;

/// Provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tokenizer: TokenizerConfig,
    /// SHA-256 of the vocabulary file the model was trained with.
    pub vocab_hash: String,
    /// 1-indexed epoch the weights come from, if produced by training.
    pub epoch: Option<usize>,
    pub val_accuracy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub meta: CheckpointMeta,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

impl Checkpoint {
    pub fn new(params: Parameters, meta: CheckpointMeta) -> Self {
        Self { params, meta }
    }

    /// Serializes the checkpoint. Values are narrowed to `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            model: self.params.config,
            meta: self.meta.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        push_u32(&mut out, header.len());
        out.extend_from_slice(&header);
        let arrays = self.params.named_arrays();
        push_u32(&mut out, arrays.len());
        for (name, _, t) in arrays {
            push_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, t.shape.len());
            for &d in &t.shape {
                push_u32(&mut out, d);
            }
            for &x in &t.data {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| bad(format!("header: {e}")))?;
        header.model.validate()?;
        let mut params = Parameters::zeros(&header.model);
        let expected: Vec<(String, Vec<usize>)> =
            params.named_arrays().into_iter().map(|(n, _, t)| (n, t.shape.clone())).collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(bad(format!("expected {} arrays, found {count}", expected.len())));
        }
        for ((name, shape), slot) in expected.iter().zip(params.arrays_mut()) {
            let name_len = r.u32()? as usize;
            let found = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("array name is not UTF-8"))?;
            if found != name {
                return Err(bad(format!("expected array {name}, found {found}")));
            }
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(bad(format!("array {name}: shape {dims:?} does not match config {shape:?}")));
            }
            let raw = r.take(slot.data.len() * 4)?;
            for (x, chunk) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
            }
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after last array"));
        }
        if !params.is_finite() {
            return Err(ModelError::NonFinite("checkpoint parameters"));
        }
        Ok(Self {
            params,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    fn sample() -> Checkpoint {
        let mut params = init_model(&ModelConfig::desk(30, 16)).unwrap();
        params.round_to_f32();
        Checkpoint::new(
            params,
            CheckpointMeta {
                tokenizer: TokenizerConfig {
                    max_sequence_length: 16,
                    vocab_size: 30,
                    lowercase: true,
                },
                vocab_hash: "ab".repeat(32),
                epoch: Some(2),
                val_accuracy: Some(0.63),
            },
        )
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let ck = sample();
        let mut bytes = ck.to_bytes();
        // Patch the header so the config claims a larger vocabulary.
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + header_len]).unwrap().to_string();
        let patched = header.replacen("\"vocab_size\":30", "\"vocab_size\":31", 1);
        assert_eq!(patched.len(), header.len());
        bytes.splice(16..16 + header_len, patched.into_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }
}
