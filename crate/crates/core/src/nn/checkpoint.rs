//! Parameter archives: `params.bin` holds every tensor as little-endian
//! `f64` back to back; `manifest.json` indexes them by name and shape and
//! carries free-form metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset in scalars from the start of `params.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub tensors: Vec<TensorEntry>,
    pub metadata: serde_json::Value,
}

pub fn save(dir: &Path, store: &ParamStore, metadata: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(store.num_scalars() * 8);
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in store.entries() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [t.nrows(), t.ncols()],
            offset,
        });
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len();
    }
    let bin = dir.join("params.bin");
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    write_json(&dir.join("manifest.json"), &CheckpointManifest { tensors, metadata })
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    read_json(&dir.join("manifest.json"))
}

/// Overwrite `store` with the archive in `dir`; names and shapes must match.
pub fn load_into(dir: &Path, store: &mut ParamStore) -> Result<CheckpointManifest> {
    let manifest = read_manifest(dir)?;
    let bin = dir.join("params.bin");
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if manifest.tensors.len() != store.len() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint has {} tensors, model expects {}",
            manifest.tensors.len(),
            store.len()
        )));
    }
    let mut out = Vec::with_capacity(store.len());
    for ((name, cur), entry) in store.entries().zip(&manifest.tensors) {
        if entry.name != name || entry.shape != [cur.nrows(), cur.ncols()] {
            return Err(Error::InvalidArgument(format!(
                "checkpoint tensor {} {:?} does not match model tensor {name} {:?}",
                entry.name,
                entry.shape,
                [cur.nrows(), cur.ncols()]
            )));
        }
        let n = entry.shape[0] * entry.shape[1];
        let start = entry.offset * 8;
        let end = start + n * 8;
        if end > bytes.len() {
            return Err(Error::InvalidArgument(format!("params.bin truncated at tensor {name}")));
        }
        let vals: Vec<f64> = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Tensor::from_shape_vec((entry.shape[0], entry.shape[1]), vals).expect("shape checked"));
    }
    store.replace_all(out);
    Ok(manifest)
}
