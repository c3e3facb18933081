use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, MetricKind};
use crate::pipeline::Checkpoint;

pub const DEFAULT_LMC_POINTS: usize = 11;

/// Scores along the straight line between two checkpoints.
/// `lambdas[j]` weights endpoint A, so `lambda = 0` is B and `lambda = 1` is A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmcCurve {
    pub endpoints: (String, String),
    pub lambdas: Vec<f64>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_scores: Option<Vec<f64>>,
    pub metric: MetricKind,
}

impl LmcCurve {
    /// Worse endpoint minus the worst point on the curve; positive means a dip.
    pub fn barrier(&self) -> f64 {
        let ends = self.scores[0].min(*self.scores.last().unwrap());
        let low = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
        ends - low
    }
}

pub fn lambda_grid(n_points: usize) -> Vec<f64> {
    let last = (n_points - 1) as f64;
    (0..n_points).map(|j| j as f64 / last).collect()
}

fn sweep(a: &Checkpoint, b: &Checkpoint, lambdas: &[f64], ds: &LabeledDataset, metric: MetricKind) -> Result<Vec<f64>> {
    lambdas
        .par_iter()
        .map(|&l| evaluate(&a.params.lerp(&b.params, l)?, &a.arch, ds, metric))
        .collect()
}

pub fn lmc_sweep(
    a: &Checkpoint,
    b: &Checkpoint,
    n_points: usize,
    dataset: &LabeledDataset,
    metric: MetricKind,
) -> Result<LmcCurve> {
    lmc_sweep_with_test(a, b, n_points, dataset, None, metric)
}

/// Like [`lmc_sweep`], also scoring every interpolant on a second split.
pub fn lmc_sweep_with_test(
    a: &Checkpoint,
    b: &Checkpoint,
    n_points: usize,
    val: &LabeledDataset,
    test: Option<&LabeledDataset>,
    metric: MetricKind,
) -> Result<LmcCurve> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 interpolation points, got {n_points}")));
    }
    a.params.check_compatible(&b.params)?;
    let lambdas = lambda_grid(n_points);
    let scores = sweep(a, b, &lambdas, val, metric)?;
    let test_scores = test.map(|t| sweep(a, b, &lambdas, t, metric)).transpose()?;
    Ok(LmcCurve {
        endpoints: (a.id.clone(), b.id.clone()),
        lambdas,
        scores,
        test_scores,
        metric,
    })
}

/// `lambda,score[,test_score]`, one row per interpolation point.
pub fn write_lmc_csv(curve: &LmcCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["lambda", "score"];
    if curve.test_scores.is_some() {
        header.push("test_score");
    }
    w.write_record(&header)?;
    for (j, (l, s)) in curve.lambdas.iter().zip(&curve.scores).enumerate() {
        let mut row = vec![format!("{l:?}"), format!("{s:?}")];
        if let Some(t) = &curve.test_scores {
            row.push(format!("{:?}", t[j]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
