use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

/// Delimited text with one sample per row; the last column is the integer label.
pub fn load_delimited(path: &Path, delimiter: u8, has_header: bool) -> Result<Dataset> {
    let mut reader =
        csv::ReaderBuilder::new().delimiter(delimiter).has_headers(has_header).trim(csv::Trim::All).from_path(path)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message: format!("row {row}: {message}"),
        };
        if record.len() < 2 {
            return Err(bad("need at least one feature and a label".into()));
        }
        let w = record.len() - 1;
        if *width.get_or_insert(w) != w {
            return Err(bad(format!("expected {} features, found {w}", width.unwrap())));
        }
        for field in record.iter().take(w) {
            features.push(field.parse::<f64>().map_err(|e| bad(format!("`{field}`: {e}")))?);
        }
        let label = &record[w];
        labels.push(label.parse::<usize>().map_err(|e| bad(format!("label `{label}`: {e}")))?);
    }
    let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    Dataset::new(features, width.unwrap_or(1), labels, classes)
}
