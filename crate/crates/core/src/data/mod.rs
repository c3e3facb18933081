//! Datasets, synthetic task generation, augmentation and CSV I/O.

mod augment;
mod csv_io;
mod dataset;
mod generator;

pub use augment::{augment, augment_with, AugmentLevel, AugmentParams};
pub use csv_io::{export_csv, load_csv, LabelColumn};
pub use dataset::{split, LabeledDataset, SplitRole};
pub use generator::{class_quotas, gen_task, TaskData, TaskKind, TaskSpec};
