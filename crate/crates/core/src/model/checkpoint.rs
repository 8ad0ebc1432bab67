//! Binary checkpoints: magic, header length, JSON header, then little-endian f64 blobs.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fusion::{FusionModel, ModelConfig};
use super::optim::AdamW;
use super::params::TensorInfo;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MODIMG01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub tensors: Vec<TensorInfo>,
    pub n_params: usize,
    pub epoch: usize,
    pub train_seed: u64,
    pub thresholds: Vec<f64>,
    /// Present when Adam moments follow the parameters.
    pub optimizer: Option<AdamW>,
    pub params_sha256: String,
}

pub fn save_checkpoint(path: &Path, model: &FusionModel, opt: Option<&AdamW>, epoch: usize, train_seed: u64, thresholds: &[f64]) -> Result<()> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        tensors: model.params.tensors.clone(),
        n_params: model.params.len(),
        epoch,
        train_seed,
        thresholds: thresholds.to_vec(),
        optimizer: opt.cloned(),
        params_sha256: model.params.sha256(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + model.params.len() * 24);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let mut blobs: Vec<&[f64]> = vec![&model.params.data];
    if let Some(o) = opt {
        blobs.push(&o.m);
        blobs.push(&o.v);
    }
    for b in blobs {
        for v in b {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(FusionModel, CheckpointHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Validation(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let mut header: CheckpointHeader = serde_json::from_slice(body)?;
    let mut model = FusionModel::new(header.config.clone())?;
    if model.params.tensors != header.tensors || model.params.len() != header.n_params {
        return Err(bad("tensor layout does not match the stored config"));
    }
    let n = header.n_params;
    let n_blobs = if header.optimizer.is_some() { 3 } else { 1 };
    let raw = &bytes[16 + hlen..];
    if raw.len() != n * 8 * n_blobs {
        return Err(bad("parameter payload has the wrong length"));
    }
    let mut vals = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    model.params.data = vals.by_ref().take(n).collect();
    if let Some(o) = header.optimizer.as_mut() {
        o.m = vals.by_ref().take(n).collect();
        o.v = vals.by_ref().take(n).collect();
    }
    if model.params.sha256() != header.params_sha256 {
        return Err(bad("parameter hash mismatch"));
    }
    Ok((model, header))
}
