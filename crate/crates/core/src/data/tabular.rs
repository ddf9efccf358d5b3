//! CSV datasets: one sample per row, a header naming the columns.

use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn load_csv(
    path: impl AsRef<Path>,
    feature_columns: &[String],
    label_column: &str,
    split: Split,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::format(path, "empty file"));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(path, format!("missing column '{name}'")))
    };
    let label_at = column(label_column)?;
    let feature_at = feature_columns.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    if feature_at.is_empty() {
        return Err(Error::InvalidConfig("no feature columns selected".into()));
    }

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let cell = |i: usize| record.get(i).unwrap_or("").trim();
        let features = feature_at
            .iter()
            .map(|&i| {
                cell(i)
                    .parse::<f32>()
                    .map_err(|_| Error::format(path, format!("row {}: non-numeric cell '{}'", row + 1, cell(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = cell(label_at)
            .parse::<usize>()
            .map_err(|_| Error::format(path, format!("row {}: invalid label '{}'", row + 1, cell(label_at))))?;
        let x = Tensor::vector(features).map_err(|e| Error::format(path, e.to_string()))?;
        samples.push((x, label));
    }
    if samples.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    let num_classes = (samples.iter().map(|s| s.1).max().unwrap() + 1).max(2);
    Dataset::new(samples, split, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_rows() {
        let f = file("a,b,y\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,2\n");
        let ds = load_csv(f.path(), &cols(&["a", "b"]), "y", Split::Train).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.samples()[2].0.data(), &[0.5, 0.6]);
    }

    #[test]
    fn missing_label_column() {
        let f = file("a,b\n0.1,0.2\n");
        assert!(load_csv(f.path(), &cols(&["a"]), "y", Split::Train).is_err());
    }

    #[test]
    fn empty_file() {
        let f = file("");
        assert!(load_csv(f.path(), &cols(&["a"]), "y", Split::Train).is_err());
    }

    #[test]
    fn non_numeric_and_ragged() {
        let f = file("a,y\nfoo,0\n");
        assert!(load_csv(f.path(), &cols(&["a"]), "y", Split::Train).is_err());
        let f = file("a,y\n0.1,0\n0.2\n");
        assert!(load_csv(f.path(), &cols(&["a"]), "y", Split::Train).is_err());
    }
}
