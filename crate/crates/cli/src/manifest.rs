//! Layer-tagged file sets for two models, as written by `synthetic` and by
//! external extractors. Relative paths resolve against the manifest's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFiles {
    pub layer: u32,
    pub weights: PathBuf,
    pub acts: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFiles {
    pub id: String,
    pub layers: Vec<LayerFiles>,
}

impl ModelFiles {
    pub fn layer(&self, layer: u32) -> Option<&LayerFiles> {
        self.layers.iter().find(|l| l.layer == layer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tokens: PathBuf,
    pub model_a: ModelFiles,
    pub model_b: ModelFiles,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text)?;
        m.check()?;
        Ok(m)
    }

    /// Loads a manifest file, or `manifest.toml` inside a directory, and
    /// makes its paths absolute.
    pub fn load(path: &Path) -> Result<Manifest> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file)
            .with_context(|| format!("reading manifest {}", file.display()))?;
        let mut m =
            Self::parse(&text).with_context(|| format!("parsing manifest {}", file.display()))?;
        let base = file.parent().unwrap_or(Path::new("."));
        m.tokens = base.join(&m.tokens);
        for model in [&mut m.model_a, &mut m.model_b] {
            for l in &mut model.layers {
                l.weights = base.join(&l.weights);
                l.acts = base.join(&l.acts);
            }
        }
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        for (side, model) in [("model_a", &self.model_a), ("model_b", &self.model_b)] {
            if model.layers.is_empty() {
                bail!("{side} lists no layers");
            }
            let mut seen: Vec<u32> = model.layers.iter().map(|l| l.layer).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                bail!("{side} lists a layer twice");
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
