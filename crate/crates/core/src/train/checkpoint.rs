use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::io::{read_json, write_json, MANIFEST_FILE};
use crate::data::mmct::{read_tensor, write_tensor};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// `manifest.json` of a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub epoch: usize,
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `<name>.mmct` per parameter plus the manifest.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    params: &ModelParams,
    train: Option<&TrainConfig>,
    epoch: usize,
    step: usize,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        write_tensor(dir.join(format!("{name}.mmct")), t)?;
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        });
    }
    let manifest = CheckpointManifest {
        model: params.config.clone(),
        train: train.cloned(),
        epoch,
        step,
        tensors,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

/// Accepts a checkpoint directory, or a training output directory whose
/// latest `epoch-NNNN` checkpoint is used.
pub fn resolve_checkpoint(path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(path.to_path_buf());
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut epochs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("epoch-"))
                && p.join(MANIFEST_FILE).is_file()
        })
        .collect();
    epochs.sort();
    epochs
        .pop()
        .ok_or_else(|| Error::Validation(format!("no checkpoint found under {}", path.display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointManifest)> {
    let dir = resolve_checkpoint(path)?;
    let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut tensors = BTreeMap::new();
    for entry in &manifest.tensors {
        let t = read_tensor(dir.join(format!("{}.mmct", entry.name)))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Validation(format!(
                "checkpoint tensor `{}` has shape {:?}, manifest says {:?}",
                entry.name,
                t.shape(),
                entry.shape
            )));
        }
        tensors.insert(entry.name.clone(), t);
    }
    let params = ModelParams::from_tensors(manifest.model.clone(), tensors)?;
    Ok((params, manifest))
}
