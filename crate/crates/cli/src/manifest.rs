//! Manifests recording the seeds and inputs behind every output directory,
//! plus content hashing so downstream stages can pin their provenance.

use blankcatch_core::agent::AgentParams;
use blankcatch_core::ballistics::TrajectoryConfig;
use blankcatch_core::ensemble::ModelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| anyhow::anyhow!("hashing {}: {e}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Serialize, Deserialize)]
pub struct SimulateManifest {
    pub format_version: u32,
    pub seed: u64,
    pub subjects: u32,
    pub trials_per_subject: u32,
    pub noiseless: bool,
    pub trajectory_config: TrajectoryConfig,
    pub agent_params: AgentParams,
    pub files: Vec<FileEntry>,
}

#[derive(Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
pub struct FeaturizeManifest {
    pub format_version: u32,
    pub split_seed: u64,
    pub source_hash: String,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub floored_features: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct TrainManifest {
    pub format_version: u32,
    pub seed: u64,
    pub dataset_hash: String,
    pub ridge_lambda: f64,
    pub specs: Vec<ModelSpec>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
