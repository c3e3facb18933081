//! Diagnostics over trained models: interpolation curves, planar error slices,
//! shifted-split reports and training cost.

mod budget;
mod landscape;
mod lmc;
mod report;

pub use budget::{compute_budget, write_budget_csv, BudgetReport};
pub use landscape::{
    count_local_minima, landscape_grid, linspace, plane_basis, write_landscape, Extent, LandscapeGrid,
    PlaneBasis, DEFAULT_MARGIN, DEFAULT_RESOLUTION,
};
pub use lmc::{lambda_grid, lmc_sweep, lmc_sweep_with_test, write_lmc_csv, LmcCurve, DEFAULT_LMC_POINTS};
pub use report::{ood_report, write_report_csv, ReportEntry, ReportRow, ReportTable};
