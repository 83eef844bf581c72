use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// Values accepted in a `--config` TOML file. Keys match the long flag names
/// with dashes replaced by underscores; each subcommand reads the keys it knows.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dict: Option<PathBuf>,
    pub gen: Option<String>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub s: Option<usize>,
    pub alpha: Option<PathBuf>,
    pub nnz: Option<usize>,
    pub bias: Option<PathBuf>,
    pub signal_a: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub estimator: Option<String>,
    pub estimators: Option<String>,
    pub support: Option<String>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub paper_rule: Option<bool>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub trials: Option<usize>,
    pub grid: Option<String>,
    pub fixed_dict: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
        toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))
    }
}
