use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::Batch;

/// Augmentation strength for vector features. `Minimal` is the identity; `Medium` adds
/// Gaussian jitter; `Heavy` adds stronger jitter and drops features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentLevel {
    Minimal,
    Medium,
    Heavy,
}

impl AugmentLevel {
    pub const ALL: [AugmentLevel; 3] = [AugmentLevel::Minimal, AugmentLevel::Medium, AugmentLevel::Heavy];

    pub fn params(self) -> AugmentParams {
        match self {
            AugmentLevel::Minimal => AugmentParams::IDENTITY,
            AugmentLevel::Medium => AugmentParams {
                jitter_sigma: 0.05,
                dropout_p: 0.0,
            },
            AugmentLevel::Heavy => AugmentParams {
                jitter_sigma: 0.15,
                dropout_p: 0.1,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentLevel::Minimal => "minimal",
            AugmentLevel::Medium => "medium",
            AugmentLevel::Heavy => "heavy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub jitter_sigma: f64,
    pub dropout_p: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        jitter_sigma: 0.0,
        dropout_p: 0.0,
    };
}

pub fn augment<R: Rng + ?Sized>(batch: &Batch, level: AugmentLevel, rng: &mut R) -> Batch {
    augment_with(batch, level.params(), rng)
}

pub fn augment_with<R: Rng + ?Sized>(batch: &Batch, params: AugmentParams, rng: &mut R) -> Batch {
    if params == AugmentParams::IDENTITY {
        return batch.clone();
    }
    let mut out = batch.clone();
    let jitter = (params.jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, params.jitter_sigma).expect("sigma is positive and finite"));
    for v in out.features.iter_mut() {
        if let Some(dist) = &jitter {
            *v += dist.sample(rng);
        }
        if params.dropout_p > 0.0 && rng.random::<f64>() < params.dropout_p {
            *v = 0.0;
        }
    }
    out
}
