//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, u32 format version, u32 header length, JSON header
//! (model config, scaler, tensor seed), u64 parameter count, parameters as
//! little-endian f64, then a SHA-256 digest of everything before it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ConfigError, ModelConfig, ModelParams};
use crate::tensor::PriceScaler;

const MAGIC: &[u8; 8] = b"GFC3D\0\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Shape(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub scaler: PriceScaler,
    /// Seed used for padding positions when building day tensors.
    pub tensor_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    scaler: PriceScaler,
    tensor_seed: u64,
}

pub fn save_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let header = serde_json::to_vec(&Header {
        config: ckpt.params.config,
        scaler: ckpt.scaler,
        tensor_seed: ckpt.tensor_seed,
    })?;
    let mut buf = Vec::with_capacity(32 + header.len() + 8 * ckpt.params.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(ckpt.params.values.len() as u64).to_le_bytes());
    for v in &ckpt.params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    out.write_all(&buf)?;
    out.write_all(&digest)?;
    Ok(())
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], CheckpointError> {
    if buf.len() < n {
        return Err(CheckpointError::Truncated);
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

pub fn load_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, CheckpointError> {
    let mut all = Vec::new();
    input.read_to_end(&mut all)?;
    if all.len() < MAGIC.len() || &all[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if all.len() < MAGIC.len() + 8 + 32 {
        return Err(CheckpointError::Truncated);
    }
    let (body, digest) = all.split_at(all.len() - 32);
    let mut cur = &body[MAGIC.len()..];
    let version = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let hlen = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(&mut cur, hlen)?)?;
    let n = u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap()) as usize;
    if cur.len() != n.checked_mul(8).ok_or(CheckpointError::Truncated)? {
        return Err(CheckpointError::Truncated);
    }
    let values = cur
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        params: ModelParams::from_values(header.config, values)?,
        scaler: header.scaler,
        tensor_seed: header.tensor_seed,
    })
}
