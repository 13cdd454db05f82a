//! Weight directories: `manifest.json` (ordered name/shape/offset list) plus
//! `weights.bin` holding little-endian `f64`s concatenated in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParameterStore, Tensor};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format_version: u32,
    pub params: Vec<WeightEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum WeightIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("weights do not match model: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WeightIoError + '_ {
    move |source| WeightIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_weights(store: &ParameterStore, dir: &Path) -> Result<(), WeightIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut bytes = Vec::with_capacity(store.scalar_count() * 8);
    let mut params = Vec::with_capacity(store.len());
    for id in store.ids() {
        let value = store.value(id);
        params.push(WeightEntry {
            name: store.name(id).to_string(),
            shape: value.shape().to_vec(),
            byte_offset: bytes.len() as u64,
        });
        for v in value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = WeightManifest {
        format_version: WEIGHTS_FORMAT_VERSION,
        params,
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&mpath))?;
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, bytes).map_err(io_err(&wpath))?;
    Ok(())
}

/// Overwrites the values of `store` from a weight directory. Names and
/// shapes must match one to one.
pub fn load_weights_into(store: &mut ParameterStore, dir: &Path) -> Result<(), WeightIoError> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: WeightManifest = serde_json::from_str(&text)?;
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(io_err(&wpath))?;
    if manifest.params.len() != store.len() {
        return Err(WeightIoError::Mismatch(format!(
            "{} tensors on disk, {} in model",
            manifest.params.len(),
            store.len()
        )));
    }
    for (entry, id) in manifest.params.iter().zip(store.ids().collect::<Vec<_>>()) {
        let expected = store.value(id).shape().to_vec();
        if entry.name != store.name(id) || entry.shape != expected {
            return Err(WeightIoError::Mismatch(format!(
                "{} {:?} vs {} {:?}",
                entry.name,
                entry.shape,
                store.name(id),
                expected
            )));
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.byte_offset as usize;
        let end = start + count * 8;
        let slice = bytes
            .get(start..end)
            .ok_or_else(|| WeightIoError::Mismatch(format!("{} truncated", entry.name)))?;
        let data = slice
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        *store.value_mut(id) = Tensor::from_vec(expected[0], expected[1], data)
            .map_err(|e| WeightIoError::Mismatch(e.to_string()))?;
    }
    Ok(())
}
