//! Experiment settings read from TOML.
//!
//! Every settings struct has explicit defaults and rejects unknown keys. A
//! run writes the fully resolved settings to `config.toml` in its output
//! directory; passing that file back with `--config` repeats the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::Reduction;
use crate::error::{Error, Result};
use crate::hypothesis::SweepConfig;
use crate::meta::MetaConfig;
use crate::models::ModelConfig;
use crate::partition::PartitionRule;
use crate::trainer::{EarlyStop, Sampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub image: PathBuf,
    /// Average RGB to one channel on load.
    pub gray: bool,
    pub partition: PartitionRule,
    /// Architecture of the single-network baseline. `output_dim` follows the image.
    pub model: ModelConfig,
    /// Shrink each head so the heads together hold about as many parameters as `model`.
    pub match_capacity: bool,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub sampler: Sampler,
    pub reduction: Reduction,
    pub local_coords: bool,
    pub early_stop: Option<EarlyStop>,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            image: PathBuf::new(),
            gray: false,
            partition: PartitionRule::None,
            model: ModelConfig::sine(2, 3).with_hidden(128),
            match_capacity: true,
            steps: 300,
            lr: 5e-4,
            seed: 0,
            sampler: Sampler::Full,
            reduction: Reduction::Mean,
            local_coords: false,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFormat {
    #[default]
    Png,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSettings {
    pub image: PathBuf,
    pub gray: bool,
    pub partition: PartitionRule,
    pub format: MaskFormat,
}

impl Default for SegmentSettings {
    fn default() -> Self {
        SegmentSettings {
            image: PathBuf::new(),
            gray: false,
            partition: PartitionRule::Grid { cols: 2, rows: 2 },
            format: MaskFormat::Png,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraSettings {
    pub image: PathBuf,
    pub cols: usize,
    pub rows: usize,
}

impl Default for SpectraSettings {
    fn default() -> Self {
        SpectraSettings {
            image: PathBuf::new(),
            cols: 2,
            rows: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisSettings {
    pub sweep: SweepConfig,
}

impl Default for HypothesisSettings {
    fn default() -> Self {
        HypothesisSettings {
            sweep: SweepConfig::desk_1d(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaTrainSettings {
    /// Directory of PNG images, read in file-name order.
    pub corpus: PathBuf,
    pub gray: bool,
    pub partition: PartitionRule,
    pub meta: MetaConfig,
}

/// Desk-scale meta settings: 32-feature SIREN, three inner steps at a fixed rate.
pub fn desk_meta_config() -> MetaConfig {
    let mut model = ModelConfig::sine(2, 3).with_hidden(32);
    model.omega0_first = 30.0;
    MetaConfig {
        model,
        alpha: vec![5e-2; 3],
        beta: 1e-4,
        batch_size: 4,
        outer_steps: 2000,
        seed: 0,
        checkpoint_every: None,
    }
}

impl Default for MetaTrainSettings {
    fn default() -> Self {
        MetaTrainSettings {
            corpus: PathBuf::new(),
            gray: false,
            partition: PartitionRule::None,
            meta: desk_meta_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaFinetuneSettings {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    pub gray: bool,
    pub partition: PartitionRule,
    pub views: usize,
}

impl Default for MetaFinetuneSettings {
    fn default() -> Self {
        MetaFinetuneSettings {
            checkpoint: PathBuf::new(),
            image: PathBuf::new(),
            gray: false,
            partition: PartitionRule::None,
            views: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    pub nets_per_arch: usize,
    pub proposition_instances: usize,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            nets_per_arch: 20,
            proposition_instances: 1000,
            seed: 0,
        }
    }
}

/// Defaults, or the contents of `path` layered over them.
pub fn load_settings<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            parse_settings(&text)
        }
    }
}

pub fn parse_settings<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Writes `config.toml` into `dir`.
pub fn write_snapshot<T: Serialize>(dir: &Path, settings: &T) -> Result<PathBuf> {
    let text = toml::to_string(settings).map_err(|e| Error::Config(format!("cannot serialize settings: {e}")))?;
    let path = dir.join("config.toml");
    fs::write(&path, text)?;
    Ok(path)
}

/// Empty paths mean the setting was never given.
pub fn require_path(path: &Path, what: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Config(format!("{what} is required")));
    }
    Ok(())
}
