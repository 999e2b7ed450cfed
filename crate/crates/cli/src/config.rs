use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use storyctl_core::model::{ModelConfig, TrainConfig};
use storyctl_core::selection::{PredictorConfig, RerankConfig};

/// Corpus-side settings shared by several subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub vocab_size: usize,
    pub clusters: usize,
    pub pca_dim: usize,
    pub kmeans_iterations: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab_size: 500,
            clusters: 5,
            pca_dim: 64,
            kmeans_iterations: 100,
            seed: 3,
        }
    }
}

/// Contents of a `--config` TOML file. Every section and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub predictor: PredictorConfig,
    pub rerank: RerankConfig,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        cfg.rerank.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
