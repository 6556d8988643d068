//! Checkpoint container.
//!
//! ```text
//! manifest_len u64 LE | manifest (UTF-8 JSON) | blob (f32 LE)
//! ```
//!
//! The manifest records the format version, dtype, model hyperparameters,
//! every tensor's name, shape and element offset into the blob, optional
//! optimizer state, and the SHA-256 of the blob. Optimizer moments are
//! stored as tensors named `adam.m/<name>` and `adam.v/<name>`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::train::{AdamState, TrainConfig};
use crate::neural::{Model, ModelConfig, TensorSpec};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "neures-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub config: TrainConfig,
    pub adam: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub training: Option<TrainingState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerEntry {
    config: TrainConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    model: ModelConfig,
    tensors: Vec<TensorSpec>,
    optimizer: Option<OptimizerEntry>,
    blob_len: u64,
    sha256: String,
}

impl Checkpoint {
    pub fn model_only(model: Model) -> Self {
        Checkpoint {
            model,
            training: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = self.model.tensors().to_vec();
        let mut values: Vec<f64> = self.model.params().to_vec();
        if let Some(t) = &self.training {
            for (prefix, src) in [("adam.m", &t.adam.m), ("adam.v", &t.adam.v)] {
                let base = values.len();
                for spec in self.model.tensors() {
                    tensors.push(TensorSpec {
                        name: format!("{prefix}/{}", spec.name),
                        shape: spec.shape.clone(),
                        offset: base + spec.offset,
                    });
                }
                values.extend_from_slice(src);
            }
        }
        let mut blob = Vec::with_capacity(4 * values.len());
        for v in &values {
            let f = *v as f32;
            debug_assert_eq!(f as f64, *v, "checkpoint value not f32-representable");
            blob.extend_from_slice(&f.to_le_bytes());
        }
        let manifest = Manifest {
            format: FORMAT_NAME.into(),
            version: CHECKPOINT_VERSION,
            dtype: "f32".into(),
            model: self.model.config().clone(),
            tensors,
            optimizer: self.training.as_ref().map(|t| OptimizerEntry {
                config: t.config.clone(),
                step: t.adam.step,
            }),
            blob_len: blob.len() as u64,
            sha256: hex::encode(Sha256::digest(&blob)),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(8 + json.len() + blob.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 8 {
            return Err(Error::Checksum);
        }
        let len = u64::from_le_bytes(data[..8].try_into().unwrap());
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_add(8))
            .ok_or(Error::Checksum)?;
        if end > data.len() {
            return Err(Error::Checksum);
        }
        let value: serde_json::Value = serde_json::from_slice(&data[8..end])
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT_NAME) {
            return Err(Error::format("checkpoint", "not a checkpoint manifest"));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if manifest.dtype != "f32" {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported dtype {}", manifest.dtype),
            ));
        }
        let blob = &data[end..];
        if blob.len() as u64 != manifest.blob_len
            || hex::encode(Sha256::digest(blob)) != manifest.sha256
        {
            return Err(Error::Checksum);
        }
        let values: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let gather = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = manifest
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))?;
            if t.shape != shape || t.offset + t.len() > values.len() {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {name} has shape {:?}", t.shape),
                ));
            }
            Ok(values[t.range()].to_vec())
        };
        // rebuild through the layout implied by the config so names and
        // shapes are checked against what the model expects
        let probe = Model::from_parts(
            manifest.model.clone(),
            vec![0.0; count_params(&manifest.model)],
        )?;
        let mut params = Vec::with_capacity(probe.param_count());
        for spec in probe.tensors() {
            params.extend(gather(&spec.name, &spec.shape)?);
        }
        let model = Model::from_parts(manifest.model.clone(), params)?;
        let training = match manifest.optimizer {
            None => None,
            Some(opt) => {
                let mut m = Vec::with_capacity(model.param_count());
                let mut v = Vec::with_capacity(model.param_count());
                for spec in model.tensors() {
                    m.extend(gather(&format!("adam.m/{}", spec.name), &spec.shape)?);
                    v.extend(gather(&format!("adam.v/{}", spec.name), &spec.shape)?);
                }
                Some(TrainingState {
                    config: opt.config,
                    adam: AdamState {
                        step: opt.step,
                        m,
                        v,
                    },
                })
            }
        };
        Ok(Checkpoint { model, training })
    }
}

fn count_params(cfg: &ModelConfig) -> usize {
    super::Layout::new(cfg).total
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&data)
}
