//! Checkpoints: a JSON manifest next to a flat little-endian `f32` blob.
//!
//! The blob holds every parameterised layer in manifest order, weights
//! before bias, with the layouts used by [`Network::to_flat`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;
const LAYER_KINDS: [&str; 4] = ["dense", "conv2d", "relu", "flatten"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub architecture: NetworkSpec,
    pub num_classes: usize,
    /// SHA-256 of the training configuration's JSON encoding.
    pub train_config_digest: Option<String>,
    pub seed: Option<u64>,
    /// Blob file name, relative to the manifest.
    pub weights_file: String,
    pub weight_count: usize,
}

/// Optional provenance stored in the manifest.
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta<'a> {
    pub train_config: Option<&'a TrainConfig>,
    pub seed: Option<u64>,
}

pub fn train_config_digest(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("train config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("weights")
}

/// Writes the manifest to `path` and the weights to `path` with a `.weights` extension.
pub fn save_checkpoint(net: &Network, meta: &CheckpointMeta<'_>, path: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let path = path.as_ref();
    let blob = blob_path(path);
    let flat = net.to_flat();
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        architecture: net.spec().clone(),
        num_classes: net.num_classes(),
        train_config_digest: meta.train_config.map(train_config_digest),
        seed: meta.seed,
        weights_file: blob
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::format(path, "checkpoint path has no file name"))?
            .to_string(),
        weight_count: flat.len(),
    };
    let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&blob, bytes)?;
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network, CheckpointManifest)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if let Some(layers) = raw.pointer("/architecture/layers").and_then(|v| v.as_array()) {
        for layer in layers {
            let kind = layer.get("kind").and_then(|k| k.as_str()).unwrap_or("<missing>");
            if !LAYER_KINDS.contains(&kind) {
                return Err(Error::format(path, format!("unknown layer kind '{kind}'")));
            }
        }
    }
    let manifest: CheckpointManifest = serde_json::from_value(raw).map_err(|e| Error::format(path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    if manifest.architecture.num_classes != manifest.num_classes {
        return Err(Error::format(path, "num_classes disagrees with architecture"));
    }
    let blob_file = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.weights_file);
    let bytes = std::fs::read(&blob_file)?;
    let expected = manifest.architecture.param_count();
    if bytes.len() != expected * 4 || manifest.weight_count != expected {
        return Err(Error::format(
            &blob_file,
            format!(
                "weight blob size mismatch: {} bytes, architecture needs {} parameters",
                bytes.len(),
                expected
            ),
        ));
    }
    let flat: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let net = Network::from_flat(manifest.architecture.clone(), &flat)?;
    Ok((net, manifest))
}
