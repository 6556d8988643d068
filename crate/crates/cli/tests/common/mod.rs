#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neures_core::neural::checkpoint::{save_checkpoint, Checkpoint};
use neures_core::neural::{Model, ModelConfig};

pub const CONFIG: &str = r#"
[paths]
dataset = "data.nrwb"
checkpoint = "model.ckpt"
output = "out"

[engine]
branches = 4

[model]
latent_dim = 8
branches = 4
hidden_width = 16
hidden_layers = 2
channels = [2, 3, 4, 4]

[dataset]
materials = 2
positions = 6
seed = 5

[train]
steps = 6
batch_size = 4
"#;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neures"))
}

/// Runs the binary in `dir` with the small test configuration.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, CONFIG).unwrap();
    }
    bin()
        .current_dir(dir)
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 8,
        branches: 4,
        hidden_width: 16,
        hidden_layers: 2,
        channels: vec![2, 3, 4, 4],
        ..ModelConfig::default()
    }
}

/// An untrained but well-formed checkpoint matching [`CONFIG`].
pub fn write_checkpoint(dir: &Path) -> PathBuf {
    let path = dir.join("model.ckpt");
    let model = Model::new(small_model_config(), 3).unwrap();
    save_checkpoint(&Checkpoint::model_only(model), &path).unwrap();
    path
}

pub fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}
