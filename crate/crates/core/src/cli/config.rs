use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Optional experiment file; command-line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
    pub branching: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub agents: Option<usize>,
    pub seed: Option<u64>,
    pub resamples: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub directions: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Read a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &cfg.model {
            if m.is_relative() {
                cfg.model = Some(base.join(m));
            }
        }
        if let Some(d) = &cfg.output.directory {
            if d.is_relative() {
                cfg.output.directory = Some(base.join(d));
            }
        }
        Ok(cfg)
    }
}
