use std::collections::BTreeMap;
use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::config::HyperConfig;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::nn::{evaluate, ArchSpec, MetricKind, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrained,
    Warmstart,
    Grid,
    Base,
    Fission,
    Soup,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrained => "pretrained",
            Stage::Warmstart => "warmstart",
            Stage::Grid => "grid",
            Stage::Base => "base",
            Stage::Fission => "fission",
            Stage::Soup => "soup",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub stage: Stage,
    /// Checkpoint this one was trained from.
    pub base_id: Option<String>,
    /// The linear-probed warm start every fine-tuned descendant shares.
    pub root_id: Option<String>,
    pub cycle_index: Option<u32>,
}

impl Lineage {
    pub fn new(stage: Stage) -> Self {
        Lineage {
            stage,
            base_id: None,
            root_id: None,
            cycle_index: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub arch: ArchSpec,
    pub params: ParamVector,
    /// Absent for soups, which are not trained.
    pub config: Option<HyperConfig>,
    pub lineage: Lineage,
    pub val_metrics: BTreeMap<MetricKind, f64>,
    /// Training cost of producing this checkpoint from its parent, in epochs.
    pub epochs_consumed: f64,
}

impl Checkpoint {
    pub fn stage(&self) -> Stage {
        self.lineage.stage
    }

    /// Fill `val_metrics` with every metric that is defined on `val`.
    pub fn score_on(&mut self, val: &LabeledDataset) -> Result<()> {
        self.val_metrics = score_all(&self.params, &self.arch, val)?;
        Ok(())
    }

    pub fn val_score(&self, metric: MetricKind) -> Option<f64> {
        self.val_metrics.get(&metric).copied()
    }
}

pub(crate) fn score_all(
    params: &ParamVector,
    arch: &ArchSpec,
    val: &LabeledDataset,
) -> Result<BTreeMap<MetricKind, f64>> {
    let mut out = BTreeMap::new();
    for metric in MetricKind::ALL {
        match evaluate(params, arch, val, metric) {
            Ok(score) => {
                out.insert(metric, score);
            }
            Err(crate::Error::UndefinedMetric { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Stable fingerprint of a dataset's contents.
pub fn dataset_fingerprint(ds: &LabeledDataset) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&(ds.features.nrows() as u64).to_le_bytes());
    h.write(&(ds.features.ncols() as u64).to_le_bytes());
    for v in ds.features.iter() {
        h.write(&v.to_bits().to_le_bytes());
    }
    for &y in &ds.labels {
        h.write(&(y as u64).to_le_bytes());
    }
    h.finish()
}

/// Directory-safe id derived from everything that determines a checkpoint's contents.
pub fn derive_id(stage: Stage, parts: &[&str]) -> String {
    let mut h = FnvHasher::default();
    h.write(stage.as_str().as_bytes());
    for p in parts {
        h.write(&(p.len() as u64).to_le_bytes());
        h.write(p.as_bytes());
    }
    format!("{}-{:016x}", stage.as_str(), h.finish())
}
