use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, ArchSpec, MetricKind, ParamVector};

/// One model to report on: a method label plus the checkpoint or soup it produced.
#[derive(Clone, Copy, Debug)]
pub struct ReportEntry<'a> {
    pub label: &'a str,
    pub id: &'a str,
    pub params: &'a ParamVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub id: String,
    /// In column order; `None` where the metric is undefined on that split.
    pub scores: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub metric: MetricKind,
    /// `"id"` first, then one name per shifted split.
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn cell(&self, method: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.method == method)?.scores[c]
    }
}

/// Score every entry on the in-distribution test split and each shifted split.
pub fn ood_report(
    entries: &[ReportEntry<'_>],
    arch: &ArchSpec,
    id_test: &LabeledDataset,
    ood_sets: &[(&str, &LabeledDataset)],
    metric: MetricKind,
) -> Result<ReportTable> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one entry".into()));
    }
    let sets: Vec<&LabeledDataset> = std::iter::once(id_test).chain(ood_sets.iter().map(|s| s.1)).collect();
    let rows = entries
        .par_iter()
        .map(|e| {
            let scores = sets
                .iter()
                .map(|ds| match evaluate(e.params, arch, ds, metric) {
                    Ok(s) => Ok(Some(s)),
                    Err(Error::UndefinedMetric { .. }) => Ok(None),
                    Err(other) => Err(other),
                })
                .collect::<Result<_>>()?;
            Ok(ReportRow {
                method: e.label.to_string(),
                id: e.id.to_string(),
                scores,
            })
        })
        .collect::<Result<_>>()?;
    let columns = std::iter::once("id".to_string())
        .chain(ood_sets.iter().map(|s| s.0.to_string()))
        .collect();
    Ok(ReportTable { metric, columns, rows })
}

/// `method,checkpoint,<column>...`; undefined cells are written as `undefined`.
pub fn write_report_csv(table: &ReportTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = ["method".to_string(), "checkpoint".to_string()]
        .into_iter()
        .chain(table.columns.iter().map(|c| format!("{c}_{}", table.metric)))
        .collect();
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.method.clone(), r.id.clone()];
        rec.extend(r.scores.iter().map(|s| match s {
            Some(v) => format!("{v:?}"),
            None => "undefined".to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
