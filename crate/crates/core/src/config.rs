//! Run configuration, read from TOML.
//!
//! Every section and key is optional; missing keys take the defaults shown
//! by [`RunConfig::canonical`], which prints the complete configuration with
//! every key present, sections in the order `paths`, `material`, `engine`,
//! `model`, `train`, `dataset` (with `dataset.plate`), and keys in
//! declaration order. Unknown keys are an error. Parsing the canonical text
//! gives back the same configuration, and printing that again gives the same
//! text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSpec;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::neural::train::TrainConfig;
use crate::neural::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// Directory for reports, curves and renders.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "dataset.nrwb".into(),
            checkpoint: "model.ckpt".into(),
            output: "out".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    /// Starting material for rendering and serving.
    pub material: MaterialParams,
    pub engine: EngineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks each section and that sections agree on sample rate and
    /// filter-bank size.
    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.material.validate()?;
        let sr = self.engine.sample_rate;
        if self.model.sample_rate != sr || self.dataset.sample_rate != sr {
            return Err(Error::Config(format!(
                "sample rates disagree: engine {sr}, model {}, dataset {}",
                self.model.sample_rate, self.dataset.sample_rate
            )));
        }
        if self.model.branches != self.engine.branches || self.model.depth != self.engine.depth {
            return Err(Error::Config(format!(
                "model L={}, M={} but engine L={}, M={}",
                self.model.branches, self.model.depth, self.engine.branches, self.engine.depth
            )));
        }
        if !(self.dataset.f_lo > 0.0
            && self.dataset.f_hi > self.dataset.f_lo
            && self.dataset.f_hi < sr / 2.0)
        {
            return Err(Error::Config(format!(
                "dataset band {}..{} Hz",
                self.dataset.f_lo, self.dataset.f_hi
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_canonical_text() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.canonical();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical(), text);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::parse("[train]\nsteps = 10\n[engine]\nblock_size = 128\n").unwrap();
        assert_eq!(cfg.train.steps, 10);
        assert_eq!(cfg.engine.block_size, 128);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_and_conflicts_are_rejected() {
        assert!(matches!(
            RunConfig::parse("[train]\nstep = 10\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("bogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::parse("[engine]\nsample_rate = 48000.0\n").is_err());
        assert!(RunConfig::parse("[model]\nbranches = 8\n").is_err());
    }
}
