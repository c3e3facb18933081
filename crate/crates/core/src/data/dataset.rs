use std::fmt;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Batch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
    Ood,
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRole::Train => "train",
            SplitRole::Val => "val",
            SplitRole::Test => "test",
            SplitRole::Ood => "ood",
        })
    }
}

/// Feature rows with integer class labels.
///
/// `row_ids` identify each row within the generator (or file) it came from, so
/// disjointness between splits can be checked directly.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub role: SplitRole,
    pub task_id: String,
    pub row_ids: Vec<u64>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        role: SplitRole,
        task_id: impl Into<String>,
    ) -> Result<Self> {
        let row_ids = (0..labels.len() as u64).collect();
        Self::with_row_ids(features, labels, class_count, role, task_id, row_ids)
    }

    pub fn with_row_ids(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        role: SplitRole,
        task_id: impl Into<String>,
        row_ids: Vec<u64>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != labels.len() || row_ids.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset rows",
                expected: features.nrows(),
                found: labels.len().min(row_ids.len()),
            });
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_count,
            role,
            task_id: task_id.into(),
            row_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows selected by index, in the given order.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn to_batch(&self) -> Batch {
        Batch {
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn subset(&self, indices: &[usize], role: SplitRole) -> Result<LabeledDataset> {
        if indices.is_empty() {
            return Err(Error::EmptySplit(format!("{role} subset of {}", self.task_id)));
        }
        Ok(LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            role,
            task_id: self.task_id.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        })
    }

    /// Most frequent class share, the accuracy of always predicting the majority.
    pub fn majority_fraction(&self) -> f64 {
        let counts = self.class_counts();
        *counts.iter().max().unwrap_or(&0) as f64 / self.len() as f64
    }
}

fn split_size(n: usize, ratio: f64) -> usize {
    // tolerate representation error such as 100 * 0.1 = 10.000000000000002
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Seeded shuffle into (train, val, test). Val and test sizes are `floor(N * ratio)`;
/// the remainder goes to train.
pub fn split(
    dataset: &LabeledDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (r_train, r_val, r_test) = ratios;
    if !(r_train > 0.0 && r_val > 0.0 && r_test > 0.0) {
        return Err(Error::InvalidArgument(format!("split ratios must be positive: {ratios:?}")));
    }
    if ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios must sum to 1: {ratios:?}")));
    }
    let n = dataset.len();
    let n_val = split_size(n, r_val);
    let n_test = split_size(n, r_test);
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::EmptySplit(format!(
            "{n} rows with ratios {ratios:?} leave an empty split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    let train = dataset.subset(&order[..n_train], SplitRole::Train)?;
    let val = dataset.subset(&order[n_train..n_train + n_val], SplitRole::Val)?;
    let test = dataset.subset(&order[n_train + n_val..], SplitRole::Test)?;
    Ok((train, val, test))
}
