//! Declarative run configuration (TOML) shared by every subcommand.
//!
//! Unknown keys are rejected in every section. Missing keys take the library
//! defaults, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{ConfusingPairRegistry, DEFAULT_ALPHA_MAX};
use crate::data::{FilterConfig, TripletOptions};
use crate::losses::{LossWeights, TripletConfig, TripletMode};
use crate::trainer::{EvalSettings, SyntheticWorldConfig, TrainConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EXPRBENCH_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossesConfig {
    pub mode: TripletMode,
    pub margin: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub lambda_sc: f64,
    pub lambda_id: f64,
}

impl Default for LossesConfig {
    fn default() -> Self {
        let t = TripletConfig::default();
        let w = LossWeights::default();
        LossesConfig { mode: t.mode, margin: t.margin, epsilon: t.epsilon, tau: t.tau, lambda_sc: w.lambda_sc, lambda_id: w.lambda_id }
    }
}

impl LossesConfig {
    pub fn triplet(&self) -> TripletConfig {
        TripletConfig { mode: self.mode, margin: self.margin, epsilon: self.epsilon, tau: self.tau }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_sc: self.lambda_sc, lambda_id: self.lambda_id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub alpha_max: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub classify_min_alpha: f64,
    pub seed: u64,
    pub registry: ConfusingPairRegistry,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let s = EvalSettings::default();
        EvalConfig {
            alpha_max: DEFAULT_ALPHA_MAX,
            grid_max: s.grid_max,
            grid_points: s.grid_points,
            classify_min_alpha: s.classify_min_alpha,
            seed: s.seed,
            registry: ConfusingPairRegistry::default(),
        }
    }
}

impl EvalConfig {
    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            alpha_max: self.alpha_max,
            grid_max: self.grid_max,
            grid_points: self.grid_points,
            classify_min_alpha: self.classify_min_alpha,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub min_dominant: f64,
    pub max_secondary_gap: f64,
    pub source_max_alpha: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let f = FilterConfig::default();
        DataConfig {
            min_dominant: f.min_dominant,
            max_secondary_gap: f.max_secondary_gap,
            source_max_alpha: TripletOptions::default().source_max_alpha,
        }
    }
}

impl DataConfig {
    pub fn filter(&self) -> FilterConfig {
        FilterConfig { min_dominant: self.min_dominant, max_secondary_gap: self.max_secondary_gap }
    }

    pub fn triplets(&self) -> TripletOptions {
        TripletOptions { source_max_alpha: self.source_max_alpha }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig { out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: SyntheticWorldConfig,
    pub losses: LossesConfig,
    pub training: TrainConfig,
    pub eval: EvalConfig,
    pub data: DataConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// Explicit path, else the path in [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }
}
