use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::{Checkpoint, Stage};

/// Training epochs spent, by stage. Pretraining and the warm start are shared by both
/// generation strategies, so they appear per stage but in neither total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub per_stage: BTreeMap<Stage, f64>,
    pub grid_total: f64,
    /// Base runs plus fission cycles.
    pub fgg_total: f64,
    /// `fgg_total / grid_total`; `None` without any grid checkpoints.
    pub ratio: Option<f64>,
}

pub fn compute_budget<'a>(checkpoints: impl IntoIterator<Item = &'a Checkpoint>) -> BudgetReport {
    let mut per_stage: BTreeMap<Stage, f64> = BTreeMap::new();
    for c in checkpoints {
        *per_stage.entry(c.stage()).or_insert(0.0) += c.epochs_consumed;
    }
    let get = |s| per_stage.get(&s).copied().unwrap_or(0.0);
    let grid_total = get(Stage::Grid);
    let fgg_total = get(Stage::Base) + get(Stage::Fission);
    BudgetReport {
        ratio: (grid_total > 0.0).then(|| fgg_total / grid_total),
        per_stage,
        grid_total,
        fgg_total,
    }
}

/// `item,epochs` rows: one per stage, then the two totals and the ratio.
pub fn write_budget_csv(report: &BudgetReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item", "epochs"])?;
    for (stage, e) in &report.per_stage {
        w.write_record([stage.as_str().to_string(), format!("{e:?}")])?;
    }
    w.write_record(["grid_total".to_string(), format!("{:?}", report.grid_total)])?;
    w.write_record(["fgg_total".to_string(), format!("{:?}", report.fgg_total)])?;
    let ratio = report.ratio.map_or_else(|| "undefined".to_string(), |r| format!("{r:?}"));
    w.write_record(["fgg_over_grid".to_string(), ratio])?;
    w.flush()?;
    Ok(())
}
