//! Experiment configuration files (TOML).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qbypass::data::{DatasetConfig, PartitionMode};
use qbypass::models::{HeadWidths, MODEL_NAMES};
use qbypass::privacy::{InversionConfig, PrivacyConfig, ShadowConfig};
use qbypass::train::{FedConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::registry::EXPERIMENTS;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyBlock {
    #[serde(default = "yes")]
    pub shadow: bool,
    #[serde(default = "default_shadows")]
    pub n_shadows: usize,
    #[serde(default = "default_inv_samples")]
    pub inversion_samples: usize,
    #[serde(default = "default_inv_iters")]
    pub inversion_iters: usize,
    #[serde(default = "default_epsilons")]
    pub dp_epsilons: Vec<f64>,
}

fn yes() -> bool {
    true
}
fn default_shadows() -> usize {
    8
}
fn default_inv_samples() -> usize {
    4
}
fn default_inv_iters() -> usize {
    200
}
fn default_epsilons() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

impl Default for PrivacyBlock {
    fn default() -> Self {
        Self {
            shadow: true,
            n_shadows: default_shadows(),
            inversion_samples: default_inv_samples(),
            inversion_iters: default_inv_iters(),
            dp_epsilons: default_epsilons(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be left out when the experiment is named on the command line.
    #[serde(default)]
    pub experiment: String,
    /// Empty means the experiment's default dataset list.
    #[serde(default)]
    pub datasets: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Empty means the experiment's default model rows.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fed: FedConfig,
    /// Non-IID partition used where an experiment contrasts IID with non-IID.
    #[serde(default = "default_non_iid")]
    pub non_iid: PartitionMode,
    #[serde(default)]
    pub privacy: PrivacyBlock,
    /// Per-dataset loader overrides, or definitions of extra datasets.
    #[serde(default)]
    pub dataset: BTreeMap<String, DatasetConfig>,
    /// Per-dataset head widths overriding the built-in defaults.
    #[serde(default)]
    pub widths: BTreeMap<String, HeadWidths>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_folds() -> usize {
    5
}
fn default_non_iid() -> PartitionMode {
    PartitionMode::Dirichlet { alpha: 0.5 }
}

impl ExperimentConfig {
    pub fn for_experiment(name: &str) -> Self {
        Self {
            experiment: name.to_string(),
            datasets: Vec::new(),
            seeds: default_seeds(),
            models: Vec::new(),
            folds: default_folds(),
            out_dir: None,
            data_dir: None,
            train: TrainConfig::default(),
            fed: FedConfig::default(),
            non_iid: default_non_iid(),
            privacy: PrivacyBlock::default(),
            dataset: BTreeMap::new(),
            widths: BTreeMap::new(),
        }
    }

    /// Parses without semantic validation.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), msg: e.to_string() })
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse(text, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file; call [`ExperimentConfig::validate`]
    /// once command-line overrides are applied.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return bad(format!("unknown experiment '{}' (expected one of {})", self.experiment, EXPERIMENTS.join(", ")));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        for d in &self.datasets {
            if !DatasetConfig::BUILTIN_NAMES.contains(&d.as_str()) && !self.dataset.contains_key(d) {
                return bad(format!("unknown dataset '{d}' (built-ins: {})", DatasetConfig::BUILTIN_NAMES.join(", ")));
            }
        }
        for m in &self.models {
            if !MODEL_NAMES.contains(&m.as_str()) {
                return bad(format!("unknown model '{m}' (expected one of {})", MODEL_NAMES.join(", ")));
            }
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        self.train.validate().or_else(|e| bad(e.to_string()))?;
        if self.fed.clients == 0 || self.fed.rounds == 0 {
            return bad("fed.clients and fed.rounds must be positive".into());
        }
        if let Some(dp) = &self.fed.dp {
            dp.validate().or_else(|e| bad(e.to_string()))?;
        }
        if self.privacy.dp_epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("privacy.dp_epsilons must be positive".into());
        }
        Ok(())
    }

    pub fn dataset_config(&self, name: &str) -> qbypass::Result<DatasetConfig> {
        match self.dataset.get(name) {
            Some(c) => Ok(c.clone()),
            None => DatasetConfig::builtin(name),
        }
    }

    pub fn head_widths(&self, name: &str) -> HeadWidths {
        self.widths.get(name).copied().unwrap_or_else(|| HeadWidths::for_dataset(name))
    }

    pub fn privacy_config(&self) -> PrivacyConfig {
        PrivacyConfig {
            train: TrainConfig { patience: None, ..self.train.clone() },
            shadow: ShadowConfig { n_shadows: self.privacy.n_shadows, ..ShadowConfig::default() },
            inversion: InversionConfig { iters: self.privacy.inversion_iters, ..InversionConfig::default() },
            inversion_samples: self.privacy.inversion_samples,
            run_shadow: self.privacy.shadow,
            folds: self.folds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml("experiment = \"table2\"\n", "t").unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.fed.clients, 5);
    }

    #[test]
    fn nested_blocks_parse() {
        let text = r#"
experiment = "table6"
datasets = ["wine"]
seeds = [7]

[train]
lr = 0.02
max_epochs = 3

[fed]
clients = 3
rounds = 2
partition = { kind = "dirichlet", alpha = 0.5 }
"#;
        let c = ExperimentConfig::from_toml(text, "t").unwrap();
        assert_eq!(c.fed.clients, 3);
        assert_eq!(c.fed.partition, PartitionMode::Dirichlet { alpha: 0.5 });
        assert_eq!(c.train.max_epochs, 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::from_toml("experiment = \"table2\"\nseeds = [1,\n", "bad.toml").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let err = ExperimentConfig::from_toml("experiment = \"table2\"\nbogus = 1\n", "bad.toml").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn semantic_errors() {
        assert!(ExperimentConfig::from_toml("experiment = \"table9\"", "t").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"table2\"\nseeds = []", "t").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"table2\"\nmodels = [\"resnet\"]", "t").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"table2\"\ndatasets = [\"iris\"]", "t").is_err());
    }
}
