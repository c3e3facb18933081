//! Source pretraining, LP-FT warm start, grid search and cyclical-schedule fission.

mod checkpoint;
mod config;
mod generate;
mod train;

pub use checkpoint::{dataset_fingerprint, derive_id, Checkpoint, Lineage, Stage};
pub use config::{GridSpec, HyperConfig, ScheduleKind};
pub use generate::{
    fgg_base_generate, fgg_fission, fine_tune, fission_steps, grid_generate, linear_probe_warmup,
    pretrain_source, FissionOutcome, GridOutcome, RunFailure,
};
