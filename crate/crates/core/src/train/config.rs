use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SparcError};
use crate::model::SelectionMode;

/// Training hyperparameters. Serialized as a flat JSON object; missing keys
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "L")]
    pub latent_dim: usize,
    pub k: usize,
    /// Weight of the cross-reconstruction term.
    pub lambda: f64,
    pub auxk_gamma: f64,
    pub auxk_k: usize,
    /// Minimum fraction of batch rows a latent must fire in to count as alive
    /// for that step.
    pub auxk_threshold: f64,
    pub dead_steps_threshold: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: SelectionMode,
    pub train_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8192,
            k: 64,
            lambda: 1.0,
            auxk_gamma: 0.03125,
            auxk_k: 64,
            auxk_threshold: 1e-3,
            dead_steps_threshold: 1000,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 50,
            batch_size: 256,
            seed: 42,
            mode: SelectionMode::Global,
            train_ratio: 0.8,
        }
    }
}

impl TrainConfig {
    /// Settings used for the L/k/λ/η ablation sweeps.
    pub fn ablation() -> Self {
        Self {
            latent_dim: 4096,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparcError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| SparcError::Config(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SparcError::Config(m.to_string()));
        if self.latent_dim == 0 {
            return fail("L must be at least 1");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be finite and non-negative");
        }
        if !(self.auxk_gamma >= 0.0 && self.auxk_gamma.is_finite()) {
            return fail("auxk_gamma must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail("eps must be positive");
        }
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return fail("train_ratio must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}
