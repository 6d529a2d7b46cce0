//! Checkpoint files.
//!
//! A checkpoint is a single JSON object:
//!
//! ```text
//! {
//!   "format": "mostfuse-checkpoint",
//!   "version": 1,
//!   "seed": <u64>,
//!   "train_config": { ...TrainConfig fields... },
//!   "architecture": { "d1": .., "d2": .., "classes": .., "hidden": [..] },
//!   "best_epoch": <usize>,
//!   "params": [<f64>, ...]
//! }
//! ```
//!
//! Parameters are written in shortest round-trip form and parsed with exact
//! rounding, so a write/read cycle reproduces every bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::train::TrainConfig;
use super::{Architecture, ModelParams};

pub const FORMAT: &str = "mostfuse-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub architecture: Architecture,
    pub best_epoch: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: &TrainConfig, best_epoch: usize) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            seed: config.seed,
            train_config: config.clone(),
            architecture: params.arch.clone(),
            best_epoch,
            params: params.values.clone(),
        }
    }

    pub fn model(&self) -> Result<ModelParams> {
        self.architecture.validate()?;
        if self.params.len() != self.architecture.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.architecture.param_count(),
                actual: self.params.len(),
            });
        }
        Ok(ModelParams {
            arch: self.architecture.clone(),
            values: self.params.clone(),
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Format {
            kind: "checkpoint",
            line: e.line(),
            reason: e.to_string(),
        })?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(r).map_err(|e| Error::Format {
            kind: "checkpoint",
            line: e.line(),
            reason: e.to_string(),
        })?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::Format {
                kind: "checkpoint",
                line: 1,
                reason: format!("unsupported format {} v{}", ckpt.format, ckpt.version),
            });
        }
        Ok(ckpt)
    }
}
