use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hyper-parameters shared by every trainer. There is no default seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub batch_size: usize,
    pub mc_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            learning_rate: 0.01,
            max_steps: 1000,
            batch_size: 32,
            mc_samples: 1,
            out_dir: None,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_max_steps(mut self, steps: usize) -> Self {
        self.max_steps = steps;
        self
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = b;
        self
    }

    pub fn with_mc_samples(mut self, s: usize) -> Self {
        self.mc_samples = s;
        self
    }

    /// Checks the ranges trainers rely on. A zero learning rate is accepted
    /// so that "no update" runs can be expressed.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples must be positive"));
        }
        Ok(())
    }
}
