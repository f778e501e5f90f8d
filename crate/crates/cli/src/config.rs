use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use zydeco::pipeline::PipelineConfig;
use zydeco::synth::DatasetSpec;

pub const CONFIG_ENV: &str = "ZYDECO_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Where `run` writes the final table, if set.
    pub snapshot: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            snapshot: None,
        }
    }
}

/// Everything a command needs, read from one TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub dataset: DatasetSpec,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `--config` wins, then `$ZYDECO_CONFIG`, then built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::parse("[pipeline.table]\ntheta_match = 0.2\n[dataset]\nseed = 3\n").unwrap();
        assert_eq!(c.pipeline.table.theta_match, 0.2);
        assert_eq!(c.pipeline.table.theta_new, PipelineConfig::default().table.theta_new);
        assert_eq!(c.dataset.seed, 3);
        assert_eq!(c.dataset.duration, 10.0);
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        assert!(RunConfig::parse("[pipelin]\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn shipped_example_parses_to_defaults() {
        let text = include_str!("../zydeco.toml");
        assert_eq!(RunConfig::parse(text).unwrap(), RunConfig::default());
    }
}
