//! Checkpoint directories: `manifest.json` plus one array file per tensor.

use std::fs;
use std::path::{Path, PathBuf};

use picrnn_autodiff::Tensor;
use picrnn_core::parr::{write_atomic, PortableArray};
use serde::{Deserialize, Serialize};

use crate::arch::{Arch, Role};
use crate::network::{Normalizer, Surrogate, WellSlot};
use crate::train::TrainConfig;
use crate::{Error, Result};

pub const FORMAT: &str = "picrnn-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub role: Role,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub arch: Arch,
    pub wells: Vec<WellSlot>,
    pub normalizer: Normalizer,
    pub seed: u64,
    #[serde(flatten)]
    pub meta: CheckpointMeta,
    pub tensors: Vec<TensorEntry>,
}

fn fail(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), message: message.into() }
}

pub fn save_checkpoint(net: &Surrogate, dir: &Path, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| picrnn_core::Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(net.params.len());
    for (info, value) in net.params.info().iter().zip(net.params.values()) {
        let file = format!("{}.parr", info.name);
        PortableArray::new(value.shape().to_vec(), value.data().to_vec())?.write(dir.join(&file))?;
        tensors.push(TensorEntry { name: info.name.clone(), role: info.role, shape: value.shape().to_vec(), file });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        arch: net.arch.clone(),
        wells: net.wells.clone(),
        normalizer: net.normalizer,
        seed: net.seed,
        meta: meta.clone(),
        tensors,
    };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Surrogate, CheckpointMeta)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| picrnn_core::Error::io(&manifest_path, e))?;
    let manifest: Manifest = picrnn_core::config::from_json_str(&text)?;
    if manifest.format != FORMAT {
        return Err(fail(&manifest_path, format!("unknown format {:?}", manifest.format)));
    }
    let mut net = Surrogate::new(manifest.arch, manifest.wells, manifest.normalizer, manifest.seed)?;
    if manifest.tensors.len() != net.params.len() {
        return Err(fail(&manifest_path, format!("{} tensors listed, architecture has {}", manifest.tensors.len(), net.params.len())));
    }
    for entry in &manifest.tensors {
        let path: PathBuf = dir.join(&entry.file);
        let arr = PortableArray::read(&path)?;
        if arr.dims != entry.shape {
            return Err(fail(&path, format!("dims {:?} disagree with manifest shape {:?}", arr.dims, entry.shape)));
        }
        let expected = net.params.info().iter().find(|p| p.name == entry.name).map(|p| p.role);
        if expected != Some(entry.role) {
            return Err(fail(&manifest_path, format!("tensor {} has unexpected role", entry.name)));
        }
        net.params.set(&entry.name, Tensor::new(arr.dims, arr.data)?)?;
    }
    Ok((net, manifest.meta))
}
