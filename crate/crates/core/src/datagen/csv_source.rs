use std::path::Path;

use super::{Dataset, Task};
use crate::error::{Error, Result};

/// Load a numeric CSV file with a header row.
///
/// Every column except `target_column` becomes a feature, in file order.
/// When `subsample` is given, a seeded uniform subset of that many rows is
/// drawn without replacement.
pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    target_column: &str,
    task: Task,
    subsample: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::invalid("CSV has no feature columns besides the target"));
    }

    let mut inputs = Vec::new();
    let mut outcomes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                column: headers.get(j).cloned().unwrap_or_default(),
                row: row + 1,
                value: cell.to_string(),
            })?;
            if j == target {
                outcomes.push(value);
            } else {
                inputs.push(value);
            }
        }
    }

    let data = Dataset::new(inputs, feature_names.len(), outcomes, task)?.with_feature_names(feature_names)?;
    match subsample {
        Some(count) => data.subsample(count, seed),
        None => Ok(data),
    }
}
