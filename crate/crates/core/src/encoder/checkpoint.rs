//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "COLINKCK"
//! version u32
//! hlen    u64      length of the JSON header
//! header  hlen bytes of UTF-8 JSON
//! payload f64 values, row-major, in header tensor order
//! ```
//!
//! The header holds the encoder config, the vocabulary fingerprint, the
//! tensor manifest (name, shape, element offset) and free-form metadata.
//! Optimizer moments, when present, are stored as extra tensors prefixed
//! `adam.m/` and `adam.v/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::params::{init_params, ModelParams};
use crate::error::{Error, Result};
use crate::linker::AdamState;

const MAGIC: &[u8; 8] = b"COLINKCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab_hash: String,
    pub optimizer: Option<AdamState>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab_hash: String,
    optimizer_step: Option<u64>,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: &[usize], data: &[f64]| {
            entries.push(TensorEntry {
                name,
                shape: shape.to_vec(),
                offset,
            });
            offset += data.len();
            for x in data {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        };
        for (name, t) in self.params.tensors() {
            push(name, t.shape, t.data);
        }
        if let Some(opt) = &self.optimizer {
            for (prefix, moments) in [("adam.m/", &opt.first), ("adam.v/", &opt.second)] {
                for (name, t) in moments.tensors() {
                    push(format!("{prefix}{name}"), t.shape, t.data);
                }
            }
        }
        let header = Header {
            config: self.params.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            tensors: entries,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(err("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(err("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| err(format!("bad header: {e}")))?;
        let payload = &body[hlen..];
        if !payload.len().is_multiple_of(8) {
            return Err(err("payload is not a whole number of f64 values"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut params = init_params(&header.config)?;
        let mut entries = header.tensors.iter();
        let mut fill = |target: &mut ModelParams, prefix: &str| -> Result<()> {
            for (name, t) in target.tensors_mut() {
                let entry = entries
                    .next()
                    .ok_or_else(|| err(format!("missing tensor {prefix}{name}")))?;
                if entry.name != format!("{prefix}{name}") || entry.shape != t.shape {
                    return Err(err(format!(
                        "manifest mismatch: expected {prefix}{name} {:?}, found {} {:?}",
                        t.shape, entry.name, entry.shape
                    )));
                }
                let end = entry.offset + t.data.len();
                if end > values.len() {
                    return Err(err(format!("payload too short for {}", entry.name)));
                }
                t.data.copy_from_slice(&values[entry.offset..end]);
            }
            Ok(())
        };
        fill(&mut params, "")?;
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let mut first = params.zeros_like();
                let mut second = params.zeros_like();
                fill(&mut first, "adam.m/")?;
                fill(&mut second, "adam.v/")?;
                Some(AdamState {
                    step,
                    first,
                    second,
                })
            }
            None => None,
        };
        if entries.next().is_some() {
            return Err(err("unexpected extra tensors"));
        }
        Ok(Checkpoint {
            params,
            vocab_hash: header.vocab_hash,
            optimizer,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // write-then-rename so an interrupted save never clobbers the last good file
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Config recorded in the checkpoint header.
    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }
}
