//! Checkpoints: a JSON manifest plus a little-endian f64 blob next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::network::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
    /// Byte length in the blob.
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dtype: String,
    config: ModelConfig,
    config_hash: String,
    blob: String,
    tensors: Vec<TensorEntry>,
}

/// SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Write `model` to `path` (manifest) and `path` with a `.bin` extension.
pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let blob = blob_path(path);
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    let mut tensors = Vec::new();
    for (name, t) in model.params().iter() {
        let offset = bytes.len();
        for x in t.to_f64_vec() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            length: bytes.len() - offset,
        });
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dtype: DTYPE.into(),
        config: model.config().clone(),
        config_hash: config_hash(model.config()),
        blob: blob
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&blob, bytes)?;
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn corrupt(tensor: &str, reason: impl Into<String>) -> Error {
    Error::Corruption {
        tensor: tensor.to_string(),
        reason: reason.into(),
    }
}

/// Read a checkpoint written by [`save_checkpoint`], verifying the config
/// hash and every tensor's extent and shape.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(corrupt(
            "manifest",
            format!("format version {} (expected {FORMAT_VERSION})", manifest.version),
        ));
    }
    if manifest.dtype != DTYPE {
        return Err(corrupt("manifest", format!("unsupported dtype {}", manifest.dtype)));
    }
    if config_hash(&manifest.config) != manifest.config_hash {
        return Err(corrupt("config", "config hash mismatch"));
    }
    let blob_file = path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob_file)?;
    let mut model = Model::<T>::new(manifest.config.clone(), 0)?;
    if manifest.tensors.len() != model.params().len() {
        return Err(corrupt(
            "manifest",
            format!(
                "{} tensors listed, model has {}",
                manifest.tensors.len(),
                model.params().len()
            ),
        ));
    }
    let mut covered = 0;
    for e in &manifest.tensors {
        let slot = model
            .params()
            .slot(&e.name)
            .ok_or_else(|| corrupt(&e.name, "not a parameter of this architecture"))?;
        let expected = model.params().tensor(slot).shape().to_vec();
        if e.shape != expected {
            return Err(corrupt(&e.name, format!("shape {:?}, expected {:?}", e.shape, expected)));
        }
        let numel: usize = e.shape.iter().product();
        if e.length != numel * 8 {
            return Err(corrupt(&e.name, format!("{} bytes for {numel} values", e.length)));
        }
        let end = e.offset.checked_add(e.length).filter(|&end| end <= bytes.len());
        let end = end.ok_or_else(|| {
            corrupt(
                &e.name,
                format!("bytes {}..{} beyond blob of {}", e.offset, e.offset + e.length, bytes.len()),
            )
        })?;
        let values: Vec<f64> = bytes[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(&e.name, "non-finite value"));
        }
        covered += e.length;
        model.params_mut().set_slot(slot, Tensor::from_f64(&e.shape, &values)?)?;
    }
    if covered != bytes.len() {
        return Err(corrupt(
            "blob",
            format!("{} bytes, tensors cover {covered}", bytes.len()),
        ));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{Dims, Preset};

    fn model() -> Model<f64> {
        let cfg = ModelConfig::preset(Preset::HC_SA, Dims::new(8, 12, 2, 1)).with_vocab(9, 10);
        Model::new(cfg, 4).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let back: Model<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), m.config());
        for ((n1, a), (n2, b)) in m.params().iter().zip(back.params().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_blob_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &path).unwrap();
        let blob = path.with_extension("bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        match load_checkpoint::<f64>(&path) {
            Err(Error::Corruption { tensor, .. }) => assert_eq!(tensor, "out.bias"),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn edited_config_fails_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("\"d_ff\": 12", "\"d_ff\": 13");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Corruption { .. })));
    }
}
