use std::path::PathBuf;

use thiserror::Error;

use crate::nn::{ArchSignature, MetricKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("architecture signature mismatch: expected {expected}, found {found}")]
    SignatureMismatch {
        expected: ArchSignature,
        found: ArchSignature,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("metric {metric} is undefined: {reason}")]
    UndefinedMetric { metric: MetricKind, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged during {stage} at step {step}: loss = {loss}")]
    Diverged {
        stage: String,
        step: u64,
        loss: f64,
    },

    #[error("split would be empty: {0}")]
    EmptySplit(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("lineage mismatch: {0}")]
    LineageMismatch(String),

    #[error("cannot build a soup from an empty member list")]
    EmptySoup,

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(String),

    #[error("checksum mismatch for {id}: manifest records {expected:016x}, weights hash to {found:016x}")]
    ChecksumMismatch { id: String, expected: u64, found: u64 },

    #[error("unsupported schema version {found} (this build understands {supported})")]
    UnsupportedSchema { found: u32, supported: u32 },

    #[error("checkpoint id collision: {0} already exists with different contents")]
    IdCollision(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    CsvWrite(#[from] csv::Error),
}
