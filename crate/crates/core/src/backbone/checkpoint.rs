//! Checkpoint layout: one JSON header line, then every tensor in canonical
//! order as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, ModelShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const FORMAT: &str = "modbal-checkpoint";
const VERSION: u32 = 1;

/// Provenance stored next to the tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Free-form run description (role, kept modalities, hyperparameters).
    #[serde(default)]
    pub info: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    n_users: usize,
    n_items: usize,
    dim: usize,
    modality_ids: Vec<String>,
    feature_dims: Vec<usize>,
    tensors: Vec<TensorEntry>,
    meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl ModelParams {
    pub fn to_bytes(&self, meta: &CheckpointMeta) -> Result<Vec<u8>> {
        let s = &self.shape;
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            n_users: s.n_users,
            n_items: s.n_items,
            dim: s.dim,
            modality_ids: s.modality_ids.clone(),
            feature_dims: s.feature_dims.clone(),
            tensors: self
                .tensors()
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
            meta: meta.clone(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for (_, t) in self.tensors() {
            for x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, CheckpointMeta)> {
        let bad = |msg: &str| Error::Data(format!("malformed checkpoint: {msg}"));
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(bad(&format!("unsupported format {} v{}", header.format, header.version)));
        }
        if header.modality_ids.len() != header.feature_dims.len() {
            return Err(bad("modality list and feature dimensions differ"));
        }
        let shape = ModelShape {
            n_users: header.n_users,
            n_items: header.n_items,
            dim: header.dim,
            modality_ids: header.modality_ids,
            feature_dims: header.feature_dims,
        };
        let mut params = ModelParams::zeros(&shape);
        let mut body = &bytes[nl + 1..];
        let mut tensors = params.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return Err(bad("tensor count"));
        }
        for ((name, t), entry) in tensors.iter_mut().zip(&header.tensors) {
            if *name != entry.name || t.shape() != (entry.rows, entry.cols) {
                return Err(bad(&format!("tensor {} does not match model layout", entry.name)));
            }
            let n = entry.rows * entry.cols * 8;
            if body.len() < n {
                return Err(bad("truncated tensor data"));
            }
            let data = body[..n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            **t = Matrix::from_vec(entry.rows, entry.cols, data);
            body = &body[n..];
        }
        if !body.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok((params, header.meta))
    }
}

pub fn write_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    let bytes = params.to_bytes(meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelParams::from_bytes(&bytes)
}
