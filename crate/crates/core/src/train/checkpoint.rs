//! Single-file checkpoints: an 8-byte magic, a little-endian u64 manifest
//! length, a JSON manifest, then every parameter as little-endian f64 in
//! manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{HasParams, Tensor};
use crate::model::{DeepConn, ModelConfig};

const MAGIC: &[u8; 8] = b"DCONNCK1";
const PRECISION: &str = "f64";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub precision: String,
    pub model: ModelConfig,
    pub parameters: Vec<ParamEntry>,
    /// Free-form run information carried alongside the weights.
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub fn save_checkpoint(model: &DeepConn, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_with(model, path, BTreeMap::new())
}

pub fn save_checkpoint_with(
    model: &DeepConn,
    path: impl AsRef<Path>,
    metadata: BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let path = path.as_ref();
    let params = model.params();
    let manifest = Manifest {
        precision: PRECISION.into(),
        model: model.config().clone(),
        parameters: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.shape().to_vec(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    let n: usize = params.iter().map(|p| p.len()).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in &params {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CheckpointCorrupt(msg.into())
}

/// Parse the manifest and raw tensors without building a model.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Manifest, Vec<Tensor>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing checkpoint header"));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if mlen > body.len() {
        return Err(corrupt("manifest extends past end of file"));
    }
    let manifest: Manifest = serde_json::from_slice(&body[..mlen])
        .map_err(|e| corrupt(format!("unreadable manifest: {e}")))?;
    if manifest.precision != PRECISION {
        return Err(corrupt(format!(
            "unsupported precision `{}`",
            manifest.precision
        )));
    }
    let mut data = &body[mlen..];
    let mut tensors = Vec::with_capacity(manifest.parameters.len());
    for entry in &manifest.parameters {
        let n: usize = entry.shape.iter().product();
        if data.len() < 8 * n {
            return Err(corrupt(format!("data for `{}` is truncated", entry.name)));
        }
        let values = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        data = &data[8 * n..];
        tensors.push(Tensor::new(&entry.shape, values).map_err(|e| corrupt(e.to_string()))?);
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }
    Ok((manifest, tensors))
}

/// Load with the configuration stored in the checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DeepConn, Manifest)> {
    let (manifest, tensors) = read_checkpoint(path)?;
    let mut model = DeepConn::new(manifest.model.clone()).map_err(|e| corrupt(e.to_string()))?;
    assign(&mut model, &manifest, tensors)?;
    Ok((model, manifest))
}

/// Load into a model built from `config`; mismatches name the parameter.
pub fn load_checkpoint_into(path: impl AsRef<Path>, config: ModelConfig) -> Result<DeepConn> {
    let (manifest, tensors) = read_checkpoint(path)?;
    let mut model = DeepConn::new(config)?;
    assign(&mut model, &manifest, tensors)?;
    Ok(model)
}

fn assign(model: &mut DeepConn, manifest: &Manifest, tensors: Vec<Tensor>) -> Result<()> {
    let mut params = model.params_mut();
    for (k, p) in params.iter().enumerate() {
        match manifest.parameters.get(k) {
            Some(e) if e.name == p.name && e.shape == p.shape() => {}
            Some(e) => {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match checkpoint entry `{}` {:?}",
                    p.name,
                    p.shape(),
                    e.name,
                    e.shape
                )))
            }
            None => {
                return Err(Error::Shape(format!(
                    "parameter `{}` is missing from the checkpoint",
                    p.name
                )))
            }
        }
    }
    if let Some(extra) = manifest.parameters.get(params.len()) {
        return Err(Error::Shape(format!(
            "checkpoint parameter `{}` has no counterpart in the model",
            extra.name
        )));
    }
    for (p, t) in params.iter_mut().zip(tensors) {
        p.assign(&t)?;
    }
    Ok(())
}
