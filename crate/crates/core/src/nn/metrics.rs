//! Classification metrics: accuracy, macro-F1, macro-recall and one-vs-rest ROC-AUC.
//!
//! Macro averages run over the classes that occur in either the true labels or the
//! predictions. A class that is never predicted still contributes its recall of 0.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use super::engine::{forward_features, softmax};
use super::params::ParamVector;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MacroF1,
    MacroRecall,
    RocAucOvr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Accuracy,
        MetricKind::MacroF1,
        MetricKind::MacroRecall,
        MetricKind::RocAucOvr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::MacroF1 => "macro_f1",
            MetricKind::MacroRecall => "macro_recall",
            MetricKind::RocAucOvr => "roc_auc_ovr",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Index of the largest entry per row; ties go to the lowest class index.
pub fn argmax_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn confusion(labels: &[usize], preds: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&y, &p) in labels.iter().zip(preds) {
        m[y][p] += 1;
    }
    m
}

fn active_classes(labels: &[usize], preds: &[usize], classes: usize) -> Vec<usize> {
    let mut seen = vec![false; classes];
    for &c in labels.iter().chain(preds) {
        seen[c] = true;
    }
    (0..classes).filter(|&c| seen[c]).collect()
}

fn check_pairs(labels: &[usize], preds: &[usize], classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions",
            expected: labels.len(),
            found: preds.len(),
        });
    }
    if let Some(&label) = labels.iter().chain(preds).find(|&&c| c >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

pub fn accuracy(labels: &[usize], preds: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = labels.iter().zip(preds).filter(|(y, p)| y == p).count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn macro_recall(labels: &[usize], preds: &[usize], classes: usize) -> Result<f64> {
    check_pairs(labels, preds, classes)?;
    let m = confusion(labels, preds, classes);
    let active = active_classes(labels, preds, classes);
    let total: f64 = active
        .iter()
        .map(|&c| {
            let support: usize = m[c].iter().sum();
            if support == 0 {
                0.0
            } else {
                m[c][c] as f64 / support as f64
            }
        })
        .sum();
    Ok(total / active.len() as f64)
}

pub fn macro_f1(labels: &[usize], preds: &[usize], classes: usize) -> Result<f64> {
    check_pairs(labels, preds, classes)?;
    let m = confusion(labels, preds, classes);
    let active = active_classes(labels, preds, classes);
    let total: f64 = active
        .iter()
        .map(|&c| {
            let tp = m[c][c];
            let fn_: usize = m[c].iter().sum::<usize>() - tp;
            let fp: usize = (0..classes).map(|r| m[r][c]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / active.len() as f64)
}

/// Mann-Whitney estimate of binary ROC-AUC; tied scores count one half.
pub fn roc_auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            what: "auc labels",
            expected: scores.len(),
            found: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric {
            metric: MetricKind::RocAucOvr,
            reason: format!("need both classes, got {n_pos} positive and {n_neg} negative"),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average 1-based ranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count();
        pos_rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    Ok((pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Macro one-vs-rest ROC-AUC over classes that have both positives and negatives.
pub fn roc_auc_ovr(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = probs.ncols();
    if let Some(&label) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..classes {
        let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        let n_pos = positive.iter().filter(|&&p| p).count();
        if n_pos == 0 || n_pos == labels.len() {
            continue;
        }
        let scores = probs.column(c).to_vec();
        total += roc_auc_binary(&scores, &positive)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric {
            metric: MetricKind::RocAucOvr,
            reason: "only one class present in labels".into(),
        });
    }
    Ok(total / counted as f64)
}

/// Score a logits matrix against labels.
pub fn score_logits(logits: ArrayView2<f64>, labels: &[usize], metric: MetricKind) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = logits.ncols();
    match metric {
        MetricKind::RocAucOvr => roc_auc_ovr(softmax(logits).view(), labels),
        _ => {
            let preds = argmax_rows(logits);
            match metric {
                MetricKind::Accuracy => {
                    check_pairs(labels, &preds, classes)?;
                    accuracy(labels, &preds)
                }
                MetricKind::MacroF1 => macro_f1(labels, &preds, classes),
                MetricKind::MacroRecall => macro_recall(labels, &preds, classes),
                MetricKind::RocAucOvr => unreachable!(),
            }
        }
    }
}

pub fn evaluate(
    params: &ParamVector,
    arch: &ArchSpec,
    dataset: &LabeledDataset,
    metric: MetricKind,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let logits = forward_features(params, arch, dataset.features.view())?;
    score_logits(logits.view(), &dataset.labels, metric)
}
