//! TOML experiment configuration. Every table and key is optional; missing
//! keys take the defaults listed in the README, unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mostfuse::data::SyntheticConfig;
use mostfuse::experiment::{AblationConfig, NoiseConfig, OodConfig};
use mostfuse::model::gradcheck::DEFAULT_STEP;
use mostfuse::model::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Number of training samples in the checked batch.
    pub samples: usize,
    /// Adam steps taken on that batch before checking.
    pub warmup_steps: usize,
    pub step: f64,
    pub threshold: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples: 8,
            warmup_steps: 0,
            step: DEFAULT_STEP,
            threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory holding train.csv, val.csv, test.csv and standardizer.json.
    /// Defaults to the output directory.
    pub data_dir: Option<PathBuf>,
    /// Checkpoint path. Defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub ood: OodConfig,
    pub ablate: AblationConfig,
    pub grad_check: GradCheckConfig,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `--seed`: replaces the data, training, noise and OOD seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.seed = seed;
        self.noise.seed = seed;
        self.ood.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.noise.validate()?;
        if self.ood.repeats == 0 {
            bail!("ood.repeats must be >= 1");
        }
        if self.ablate.seeds.is_empty() {
            bail!("ablate.seeds must not be empty");
        }
        let g = &self.grad_check;
        if g.samples == 0 {
            bail!("grad_check.samples must be >= 1");
        }
        if !(g.step > 0.0 && g.step.is_finite()) {
            bail!("grad_check.step must be positive, got {}", g.step);
        }
        if !(g.threshold > 0.0) {
            bail!("grad_check.threshold must be positive, got {}", g.threshold);
        }
        Ok(())
    }

    pub fn data_dir(&self, out: &Path) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| out.to_path_buf())
    }

    pub fn checkpoint_path(&self, out: &Path) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.json"))
    }
}
