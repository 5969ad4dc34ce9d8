//! Checkpoint = `<stem>.swt` (one SWT1 tensor per parameter, concatenated in
//! layout order) plus `<stem>.json` (manifest).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::Network;
use super::train::{Phase, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::io::swt1::decode_all;
use crate::io::Tensor;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    /// File name of the tensor blob, relative to the manifest.
    pub tensors_file: String,
    pub tensors: Vec<TensorEntry>,
    pub phase: Phase,
    pub iteration: usize,
    pub config: TrainConfig,
    /// Per-layer mask CSVs, relative to the manifest.
    pub mask_files: Vec<String>,
}

fn encode_params(net: &Network) -> Vec<u8> {
    let mut bytes = Vec::new();
    for spec in net.specs() {
        let t = Tensor {
            dims: spec.shape.iter().map(|&d| d as u64).collect(),
            data: net.params()[spec.offset..spec.offset + spec.len].to_vec(),
        };
        t.encode_into(&mut bytes);
    }
    bytes
}

/// Writes `<dir>/<stem>.swt` and `<dir>/<stem>.json`; returns the manifest path.
pub fn save_checkpoint(
    dir: &Path,
    stem: &str,
    state: &TrainState,
    mask_files: &[String],
) -> Result<PathBuf> {
    let tensors_file = format!("{stem}.swt");
    let manifest = CheckpointManifest {
        version: MANIFEST_VERSION,
        tensors_file: tensors_file.clone(),
        tensors: state
            .net
            .specs()
            .iter()
            .map(|s| TensorEntry {
                name: s.name.clone(),
                dims: s.shape.clone(),
            })
            .collect(),
        phase: state.phase,
        iteration: state.iteration,
        config: state.config.clone(),
        mask_files: mask_files.to_vec(),
    };
    let blob = dir.join(&tensors_file);
    fs::write(&blob, encode_params(&state.net)).map_err(|e| Error::io(&blob, e))?;
    let path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(Network, CheckpointManifest)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            "checkpoint manifest",
            format!("unsupported version {}", manifest.version),
        ));
    }
    let blob = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.tensors_file);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    let tensors = decode_all(&bytes)?;
    if tensors.len() != manifest.tensors.len() {
        return Err(Error::format(
            "checkpoint",
            format!(
                "manifest lists {} tensors, blob has {}",
                manifest.tensors.len(),
                tensors.len()
            ),
        ));
    }
    let mut params = Vec::new();
    for (t, entry) in tensors.into_iter().zip(&manifest.tensors) {
        let dims: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
        if dims != entry.dims {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "tensor {} has dims {dims:?}, manifest says {:?}",
                    entry.name, entry.dims
                ),
            ));
        }
        params.extend(t.data);
    }
    let net = Network::from_params(manifest.config.net.clone(), params)?;
    let names: Vec<&str> = net.specs().iter().map(|s| s.name.as_str()).collect();
    let listed: Vec<&str> = manifest.tensors.iter().map(|e| e.name.as_str()).collect();
    if names != listed {
        return Err(Error::format(
            "checkpoint",
            "tensor names do not match the network layout",
        ));
    }
    Ok((net, manifest))
}
