use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgpt_core::canonical::{from_json_str, to_canonical_string};
use wgpt_core::model::ModelConfig;
use wgpt_core::training::TrainConfig;
use wgpt_core::{Error, Result};

/// Input and output locations of a run, relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
}

/// Everything a training run needs, as one canonical JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataPaths,
    /// Models trained by `compare`; the three presets when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<ModelConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = from_json_str(text)?;
        cfg.model.validate()?;
        cfg.train.validate(&cfg.model)?;
        for m in &cfg.compare {
            m.validate()?;
        }
        Ok(cfg)
    }

    pub fn to_canonical(&self) -> Result<String> {
        to_canonical_string(self)
    }

    /// Reads `path` and resolves relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data.manifest = base.join(&cfg.data.manifest);
        cfg.data.out_dir = base.join(&cfg.data.out_dir);
        Ok(cfg)
    }
}
