use std::path::Path;

use ndarray::Array2;

use super::dataset::{LabeledDataset, SplitRole};
use crate::error::{Error, Result};

/// Which CSV column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by position, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Load a comma-separated file of numeric features and one integer label column.
///
/// A first row containing any non-numeric field is treated as a header. The class
/// count is the largest label plus one.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, 0, e.to_string()))?;

    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, row + 1, 0, e.to_string()))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let first_is_header = records[0].iter().any(|f| f.trim().parse::<f64>().is_err());
    let header = first_is_header.then(|| records.remove(0));
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let width = records[0].len();
    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|f| f.trim() == name))
            .ok_or_else(|| csv_err(path, 1, 0, format!("no header column named {name:?}")))?,
    };
    if label_idx >= width {
        return Err(csv_err(path, 1, label_idx + 1, format!("label column out of range for {width} columns")));
    }

    let data_row_offset = if header.is_some() { 2 } else { 1 };
    let dim = width - 1;
    let mut features = Vec::with_capacity(records.len() * dim);
    let mut labels = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let row = i + data_row_offset;
        if rec.len() != width {
            return Err(csv_err(path, row, rec.len(), format!("expected {width} fields, found {}", rec.len())));
        }
        for (col, field) in rec.iter().enumerate() {
            let field = field.trim();
            if col == label_idx {
                let label = field
                    .parse::<usize>()
                    .map_err(|_| csv_err(path, row, col + 1, format!("label {field:?} is not a non-negative integer")))?;
                labels.push(label);
            } else {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| csv_err(path, row, col + 1, format!("feature {field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(csv_err(path, row, col + 1, format!("feature {field:?} is not finite")));
                }
                features.push(v);
            }
        }
    }

    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let features = Array2::from_shape_vec((labels.len(), dim), features)
        .map_err(|e| csv_err(path, 0, 0, e.to_string()))?;
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(features, labels, class_count, SplitRole::Train, task_id)
}

/// Write features followed by the label, with a `f0..f{d-1},label` header row.
pub fn export_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (row, &label) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        fields.push(label.to_string());
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_err(path: &Path, row: usize, column: usize, message: String) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        message,
    }
}
