//! Experiment configuration files.
//!
//! Every file is a JSON document with a `version` field. Unknown keys are
//! rejected, and parse errors report the line, column and field path.

use std::fs;
use std::path::{Path, PathBuf};

use gcsam::analysis::{GridSpec, Normalization};
use gcsam::data::SplitSpec;
use gcsam::models::MlpSpec;
use gcsam::optim::Optimizer;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    TwoMoons {
        n: usize,
        noise: f64,
        seed: u64,
    },
    GaussianBlobs {
        n: usize,
        centers: Vec<Vec<f64>>,
        sigma: f64,
        seed: u64,
    },
    /// Relative paths resolve against the config file's directory.
    Csv { path: PathBuf, label_column: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub split: SplitSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    ValLoss,
    ValAccuracy,
}

/// Stops after `patience` epochs without improvement on a split held out
/// from the training set, then restores the best parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    pub metric: StopMetric,
    pub val_fraction: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub max_steps: Option<u64>,
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSettings {
    pub rho: f64,
    pub num_directions: usize,
    pub ascent_steps: usize,
}

impl Default for SharpnessSettings {
    fn default() -> Self {
        Self {
            rho: 0.05,
            num_directions: 32,
            ascent_steps: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSettings {
    pub delta: f64,
    /// Prior scale; required, there is no default.
    pub eta: f64,
    #[serde(default)]
    pub constant_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Drives batch order and the sharpness probe.
    pub seed: u64,
    pub model: MlpSpec,
    pub data: DataConfig,
    pub optimizer: Optimizer,
    pub training: TrainingConfig,
    #[serde(default)]
    pub sharpness: SharpnessSettings,
    #[serde(default)]
    pub bound: Option<BoundSettings>,
    /// Default output directory; `--out` overrides it. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory the config was read from; used for relative data paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn check_version(v: u32) -> Result<(), HarnessError> {
    if v != CONFIG_VERSION {
        return Err(HarnessError::Validation(format!(
            "unsupported config version {v}; this build reads version {CONFIG_VERSION}"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_version(self.version)?;
        self.model.validate()?;
        self.optimizer.validate()?;
        let t = &self.training;
        if t.epochs.is_none() && t.max_steps.is_none() {
            return Err(HarnessError::Validation(
                "training needs `epochs`, `max_steps` or both".into(),
            ));
        }
        if t.epochs == Some(0) || t.max_steps == Some(0) {
            return Err(HarnessError::Validation(
                "epochs and max_steps must be positive".into(),
            ));
        }
        if t.batch_size == 0 {
            return Err(HarnessError::Validation("batch_size must be >= 1".into()));
        }
        if let Some(es) = t.early_stop {
            if es.patience == 0 || !(es.val_fraction > 0.0 && es.val_fraction < 1.0) {
                return Err(HarnessError::Validation(
                    "early_stop needs patience >= 1 and val_fraction in (0, 1)".into(),
                ));
            }
        }
        let s = &self.sharpness;
        if !(s.rho > 0.0 && s.rho.is_finite()) || s.num_directions == 0 {
            return Err(HarnessError::Validation(
                "sharpness needs rho > 0 and num_directions >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Replaces the run seed and the weight-initialization seed. Data stays fixed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig = load_json(path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Comparison of several configs over shared seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub version: u32,
    /// Run config files; the first one is the speed reference.
    pub configs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
}

/// Grid over learning rate and ρ applied to a template run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub version: u32,
    pub template: PathBuf,
    pub lr: Vec<f64>,
    #[serde(default)]
    pub rho: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetPart {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub version: u32,
    pub run_config: PathBuf,
    pub checkpoint: PathBuf,
    pub grid: GridSpec,
    pub normalization: Normalization,
    /// Seed for the two random directions.
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetPart,
}

macro_rules! loadable {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn load(path: &Path) -> Result<Self, HarnessError> {
                let cfg: Self = load_json(path)?;
                check_version(cfg.version)?;
                Ok(cfg)
            }
        }
    )*};
}

loadable!(CompareConfig, GridConfig, LandscapeConfig);

/// Path relative to the directory holding `config`.
pub fn relative_to(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    config.parent().map_or_else(|| path.to_path_buf(), |d| d.join(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_json(&text, path)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let full = inner.to_string();
        let message = full
            .rsplit_once(" at line ")
            .map_or(full.as_str(), |(m, _)| m)
            .to_string();
        HarnessError::Config {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            message,
        }
    })
}
