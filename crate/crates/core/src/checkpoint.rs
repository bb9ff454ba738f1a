//! On-disk parameter snapshots: `manifest.json` plus one raw little-endian
//! f64 file per tensor, row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, TENSOR_NAMES};
use crate::tensor::Matrix;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dim: usize,
    pub layers: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub num_groups: usize,
    pub byte_order: String,
    pub element_type: String,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    /// Rejects a checkpoint whose dimension or depth differs from `dim`/`layers`.
    pub fn check_config(&self, dim: usize, layers: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Config(format!(
                "checkpoint has embedding dim {} but config expects {dim}",
                self.dim
            )));
        }
        if self.layers != layers {
            return Err(Error::Config(format!(
                "checkpoint has {} layers but config expects {layers}",
                self.layers
            )));
        }
        Ok(())
    }

    /// Rejects a checkpoint trained on a dataset of different size.
    pub fn check_dataset(&self, num_users: usize, num_items: usize, num_groups: usize) -> Result<()> {
        let want = (num_users, num_items, num_groups);
        let have = (self.num_users, self.num_items, self.num_groups);
        if want != have {
            return Err(Error::InvalidDataset(format!(
                "checkpoint expects (users, items, groups) = {have:?} but dataset has {want:?}"
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(params: &ModelParams, layers: usize, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for (name, m) in TENSOR_NAMES.iter().zip(params.tensors()) {
        let file = format!("{name}.bin");
        let path = dir.join(&file);
        let bytes: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name: (*name).to_string(),
            rows: m.rows(),
            cols: m.cols(),
            file,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        dim: params.dim(),
        layers,
        num_users: params.num_users(),
        num_items: params.num_items(),
        num_groups: params.num_groups(),
        byte_order: "little".into(),
        element_type: "f64".into(),
        tensors,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::checkpoint(&path, format!("malformed manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::checkpoint(
            &path,
            format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    if manifest.byte_order != "little" || manifest.element_type != "f64" {
        return Err(Error::checkpoint(
            &path,
            format!(
                "unsupported encoding {}/{}",
                manifest.byte_order, manifest.element_type
            ),
        ));
    }
    let names: Vec<&str> = manifest.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != TENSOR_NAMES {
        return Err(Error::checkpoint(&path, format!("unexpected tensor list {names:?}")));
    }
    let expected = ModelParams::expected_shapes(manifest.num_users, manifest.num_items, manifest.num_groups, manifest.dim);
    for (t, &(r, c)) in manifest.tensors.iter().zip(expected.iter()) {
        if (t.rows, t.cols) != (r, c) {
            return Err(Error::checkpoint(
                &path,
                format!("tensor {} is {}x{}, expected {r}x{c}", t.name, t.rows, t.cols),
            ));
        }
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let path = dir.join(&t.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let want = t.rows * t.cols * 8;
        if bytes.len() != want {
            return Err(Error::checkpoint(
                &path,
                format!("expected {want} bytes, found {}", bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Matrix::from_vec(t.rows, t.cols, data)?);
    }
    Ok((ModelParams::from_tensors(tensors)?, manifest))
}

/// Loads and checks the checkpoint against the expected `dim` and `layers`.
pub fn load_checkpoint_for(dir: &Path, dim: usize, layers: usize) -> Result<ModelParams> {
    let manifest = read_manifest(dir)?;
    manifest.check_config(dim, layers)?;
    Ok(load_checkpoint(dir)?.0)
}
