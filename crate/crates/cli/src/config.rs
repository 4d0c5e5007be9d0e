//! Key-value config files. Every key mirrors a command-line flag; flags
//! win when both are given.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub metrics: Option<String>,
    pub filters: Option<String>,
    pub null_samples: Option<usize>,
    pub seed: Option<u64>,
    pub block_size: Option<usize>,
    pub top_k: Option<usize>,
    pub variance_retained: Option<f64>,
    pub svcca_epsilon: Option<f64>,
    pub rdm_metric: Option<String>,
    pub knn_k: Option<usize>,
    pub shuffle_samples: Option<usize>,
    pub subset_samples: Option<usize>,
    pub categories: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<FileConfig> {
        Ok(toml::from_str(text)?)
    }
}

pub fn load_optional(path: Option<&Path>) -> Result<FileConfig> {
    path.map_or(Ok(FileConfig::default()), FileConfig::load)
}
