//! Binary checkpoint format.
//!
//! Layout (little-endian): `b"CGHN"`, `u32` version, `u32` header length,
//! UTF-8 JSON header, then every tensor's `f64` values in header order.
//! The header carries an FNV-1a checksum of the value bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, NnError};
use crate::rng::fnv1a_bytes;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGHN";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_HEADER: u32 = 1 << 24;

/// Training context stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: u64,
    pub fold: Option<u64>,
    /// Free-form echo of the training configuration.
    pub hyperparameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    layers: Vec<LayerEntry>,
    bn_updates: u64,
    meta: CheckpointMeta,
    checksum: String,
}

fn tensors(p: &ModelParams) -> Vec<(LayerEntry, &Vec<f64>)> {
    let e = |name: &str, shape: Vec<usize>| LayerEntry { name: name.to_string(), shape };
    let c1 = &p.conv1;
    let c2 = &p.conv2;
    vec![
        (e("conv1.kernel", vec![c1.kh, c1.kw, c1.in_channels, c1.out_channels]), &c1.kernel),
        (e("conv1.bias", vec![c1.out_channels]), &c1.bias),
        (e("conv2.kernel", vec![c2.kh, c2.kw, c2.in_channels, c2.out_channels]), &c2.kernel),
        (e("conv2.bias", vec![c2.out_channels]), &c2.bias),
        (e("bn.gamma", vec![p.bn.channels()]), &p.bn.gamma),
        (e("bn.beta", vec![p.bn.channels()]), &p.bn.beta),
        (e("bn.running_mean", vec![p.bn.channels()]), &p.bn.running_mean),
        (e("bn.running_var", vec![p.bn.channels()]), &p.bn.running_var),
        (e("dense1.weights", vec![p.dense1.n_in, p.dense1.n_out]), &p.dense1.weights),
        (e("dense1.bias", vec![p.dense1.n_out]), &p.dense1.bias),
        (e("dense2.weights", vec![p.dense2.n_in, p.dense2.n_out]), &p.dense2.weights),
        (e("dense2.bias", vec![p.dense2.n_out]), &p.dense2.bias),
        (e("out.weights", vec![p.out.n_in, p.out.n_out]), &p.out.weights),
        (e("out.bias", vec![p.out.n_out]), &p.out.bias),
    ]
}

fn tensors_mut(p: &mut ModelParams) -> Vec<&mut Vec<f64>> {
    vec![
        &mut p.conv1.kernel,
        &mut p.conv1.bias,
        &mut p.conv2.kernel,
        &mut p.conv2.bias,
        &mut p.bn.gamma,
        &mut p.bn.beta,
        &mut p.bn.running_mean,
        &mut p.bn.running_var,
        &mut p.dense1.weights,
        &mut p.dense1.bias,
        &mut p.dense2.weights,
        &mut p.dense2.bias,
        &mut p.out.weights,
        &mut p.out.bias,
    ]
}

/// Serialize parameters and metadata.
pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams, meta: &CheckpointMeta) -> Result<(), NnError> {
    let entries = tensors(params);
    let mut payload = Vec::with_capacity(8 * params.parameter_count() + 8 * 64);
    for (_, values) in &entries {
        for v in values.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        model: params.config,
        layers: entries.into_iter().map(|(e, _)| e).collect(),
        bn_updates: params.bn.updates,
        meta: meta.clone(),
        checksum: format!("{:016x}", fnv1a_bytes(&payload)),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&payload)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| NnError::Checkpoint("truncated preamble".into()))?;
    Ok(u32::from_le_bytes(b))
}

/// Parse a checkpoint, validating structure and checksum.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, CheckpointMeta), NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| NnError::Checkpoint("truncated preamble".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = read_u32(&mut r)?;
    if header_len > MAX_HEADER {
        return Err(NnError::Checkpoint(format!("header length {header_len} is implausible")));
    }
    let mut json = vec![0u8; header_len as usize];
    r.read_exact(&mut json).map_err(|_| NnError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(format!("header: {e}")))?;

    let mut params = ModelParams::zeros(header.model)?;
    let expected: Vec<LayerEntry> = tensors(&params).into_iter().map(|(e, _)| e).collect();
    if expected != header.layers {
        return Err(NnError::Checkpoint("layer table does not match the model configuration".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: usize = tensors_mut(&mut params).iter().map(|t| t.len()).sum();
    if payload.len() != 8 * total {
        return Err(NnError::Checkpoint(format!("payload holds {} bytes, expected {}", payload.len(), 8 * total)));
    }
    if format!("{:016x}", fnv1a_bytes(&payload)) != header.checksum {
        return Err(NnError::ChecksumMismatch);
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in tensors_mut(&mut params) {
        for v in t.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    params.bn.updates = header.bn_updates;
    if params.bn.running_var.iter().any(|&v| !(v > 0.0)) {
        return Err(NnError::Checkpoint("running variance must be positive".into()));
    }
    Ok((params, header.meta))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params, meta)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta), NnError> {
    read_checkpoint(std::fs::File::open(path).map(std::io::BufReader::new)?)
}
