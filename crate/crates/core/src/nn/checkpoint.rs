//! Binary checkpoint container.
//!
//! Layout: the 8 magic bytes `KWSBCKPT`, a little-endian `u64` header
//! length, a UTF-8 JSON header (spec, seed, tensor names and shapes,
//! metadata), then every tensor as little-endian `f32` in declaration
//! order. A pruned checkpoint appends one byte (0 or 1) per entry of each
//! weight tensor's mask, again in declaration order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::TensorInfo;
use super::model::ModelParams;
use super::spec::ModelSpec;

const MAGIC: &[u8; 8] = b"KWSBCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    /// One mask per weight tensor (`true` keeps the weight).
    pub masks: Option<Vec<Vec<bool>>>,
    /// Free-form provenance, e.g. feature config and learning rate.
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    spec: ModelSpec,
    seed: u64,
    tensors: Vec<TensorInfo>,
    has_masks: bool,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tensors = ckpt.model.tensor_info();
    let weights: Vec<&TensorInfo> = tensors.iter().filter(|t| t.is_weight).collect();
    if let Some(masks) = &ckpt.masks {
        if masks.len() != weights.len() || masks.iter().zip(&weights).any(|(m, t)| m.len() != t.len()) {
            return Err(Error::Checkpoint("mask shapes do not match weight tensors".into()));
        }
    }
    let header = Header {
        version: VERSION,
        spec: ckpt.model.spec.clone(),
        seed: ckpt.model.seed,
        tensors,
        has_masks: ckpt.masks.is_some(),
        metadata: ckpt.metadata.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + ckpt.model.num_params() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in ckpt.model.tensors.iter().flatten() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if let Some(masks) = &ckpt.masks {
        buf.extend(masks.iter().flatten().map(|&b| u8::from(b)));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.version != VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let expected = header.spec.network()?.tensors().to_vec();
    if expected != header.tensors {
        return Err(bad("tensor table does not match the spec"));
    }
    let mut pos = 16 + hlen;
    let mut tensors = Vec::with_capacity(expected.len());
    for t in &expected {
        let n = t.len();
        let raw = bytes.get(pos..pos + 4 * n).ok_or_else(|| bad("truncated payload"))?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect(),
        );
        pos += 4 * n;
    }
    let masks = if header.has_masks {
        let mut masks = Vec::new();
        for t in expected.iter().filter(|t| t.is_weight) {
            let raw = bytes.get(pos..pos + t.len()).ok_or_else(|| bad("truncated mask section"))?;
            if raw.iter().any(|&b| b > 1) {
                return Err(bad("mask bytes must be 0 or 1"));
            }
            masks.push(raw.iter().map(|&b| b == 1).collect());
            pos += t.len();
        }
        Some(masks)
    } else {
        None
    };
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        model: ModelParams::from_tensors(header.spec, header.seed, tensors)?,
        masks,
        metadata: header.metadata,
    })
}
