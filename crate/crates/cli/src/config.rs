use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rcad_core::datagen::GenConfig;
use rcad_core::preprocess::MissingPolicy;
use rcad_core::recurrent::{ModelSpec, Variant, DEFAULT_DROPOUT};
use rcad_core::training::{PipelineConfig, SelectionConfig, TrainConfig};

pub const SEED_ENV: &str = "RCAD_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub missing: MissingPolicy,
    pub standardize: bool,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            missing: MissingPolicy::default(),
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    /// Features to keep; `None` keeps all of them.
    pub k: Option<usize>,
    pub redundancy_cap: f64,
    /// Standardized-residual cut-off for outlier flagging.
    pub outlier_threshold: f64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            k: None,
            redundancy_cap: 0.95,
            outlier_threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub variant: Variant,
    /// One entry per recurrent layer; defaults depend on the variant.
    pub hidden_sizes: Option<Vec<usize>>,
    pub dropout_rate: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            variant: Variant::Hybrid,
            hidden_sizes: None,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }
}

/// Everything a run depends on. Loaded from JSON, then overridden by
/// `RCAD_SEED`, then by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: GenConfig,
    pub preprocess: PreprocessSettings,
    pub features: FeatureSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: GenConfig::default(),
            preprocess: PreprocessSettings::default(),
            features: FeatureSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
            config.set_seed(seed);
        }
        Ok(config)
    }

    /// The one seed drives both data generation and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.model_spec(1).validate()?;
        if let Some(k) = self.features.k {
            if k == 0 {
                bail!("features.k must be at least 1");
            }
        }
        if !(self.features.redundancy_cap > 0.0 && self.features.redundancy_cap <= 1.0) {
            bail!("features.redundancy_cap must lie in (0, 1], got {}", self.features.redundancy_cap);
        }
        if !(self.features.outlier_threshold > 0.0) {
            bail!("features.outlier_threshold must be positive");
        }
        Ok(())
    }

    pub fn model_spec(&self, input_size: usize) -> ModelSpec {
        let variant = self.model.variant;
        ModelSpec {
            hidden_sizes: self.model.hidden_sizes.clone().unwrap_or_else(|| variant.default_hidden()),
            dropout_rate: self.model.dropout_rate,
            ..ModelSpec::new(variant, input_size)
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            standardize: self.preprocess.standardize,
            selection: self.features.k.map(|k| SelectionConfig {
                k,
                redundancy_cap: self.features.redundancy_cap,
            }),
        }
    }
}
