use serde::{Deserialize, Serialize};

use crate::data::AugmentLevel;
use crate::error::{Error, Result};
use crate::optim::{AdamWConfig, CyclicalSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Per-epoch cosine annealing from `lr` to zero over `epochs`.
    Cosine,
    /// Step-indexed triangular schedule; `lr` is ignored.
    Cyclical(CyclicalSchedule),
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub lr: f64,
    pub seed: u64,
    pub augment: AugmentLevel,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub optimizer: AdamWConfig,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            lr: 1e-3,
            seed: 0,
            augment: AugmentLevel::Minimal,
            epochs: 20,
            warmup_epochs: 10,
            batch_size: 32,
            schedule: ScheduleKind::Cosine,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        self.optimizer.validate()
    }

    pub fn with_lr(&self, lr: f64) -> Self {
        HyperConfig { lr, ..self.clone() }
    }
}

/// Hyperparameter grid: every combination of learning rate, augmentation and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lrs: Vec<f64>,
    pub augments: Vec<AugmentLevel>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.lrs.len() * self.augments.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configurations in lr-major, then augmentation, then seed order.
    pub fn configs(&self, template: &HyperConfig) -> Vec<HyperConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.lrs {
            for &augment in &self.augments {
                for &seed in &self.seeds {
                    out.push(HyperConfig {
                        lr,
                        augment,
                        seed,
                        schedule: ScheduleKind::Cosine,
                        ..template.clone()
                    });
                }
            }
        }
        out
    }
}
