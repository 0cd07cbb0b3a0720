//! Tabular numeric datasets: CSV ingestion, validation, and feature scaling.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::DataError;

/// An immutable n x m matrix of finite feature values with unique feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Array2<f64>,
    feature_names: Vec<String>,
    ground_truth: Option<Vec<i64>>,
    label_names: Option<Vec<String>>,
    id: String,
}

impl Dataset {
    /// Builds a dataset after checking finiteness, name uniqueness, and label length.
    pub fn new(
        rows: Array2<f64>,
        feature_names: Vec<String>,
        ground_truth: Option<Vec<i64>>,
    ) -> Result<Self, DataError> {
        Self::with_label_names(rows, feature_names, ground_truth, None)
    }

    pub fn with_label_names(
        rows: Array2<f64>,
        feature_names: Vec<String>,
        ground_truth: Option<Vec<i64>>,
        label_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let (n, m) = rows.dim();
        if n == 0 || m == 0 {
            return Err(DataError::EmptyDataset);
        }
        if feature_names.len() != m {
            return Err(DataError::ParseError {
                row: 0,
                col: feature_names.len().min(m),
                message: format!("{} feature names for {m} columns", feature_names.len()),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateFeatureName(name.clone()));
            }
        }
        if let Some(((row, col), _)) = rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonNumericCell { row, col });
        }
        if let Some(labels) = &ground_truth {
            if labels.len() != n {
                return Err(DataError::ParseError {
                    row: labels.len().min(n),
                    col: m,
                    message: format!("{} labels for {n} rows", labels.len()),
                });
            }
        }
        let id = content_hash(&rows, &feature_names);
        Ok(Self {
            rows,
            feature_names,
            ground_truth,
            label_names,
            id,
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn ground_truth(&self) -> Option<&[i64]> {
        self.ground_truth.as_deref()
    }

    /// Original label strings, indexed by ground-truth id, when labels were textual.
    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    /// Hex SHA-256 over the matrix bytes and feature names.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Writes the dataset as CSV. Ground-truth labels, when present, go in a
    /// trailing `label` column so that `load_dataset(.., Some("label"), ..)`
    /// round-trips.
    pub fn write_csv<W: Write>(&self, out: W, delimiter: u8) -> Result<(), DataError> {
        let io_err = |e: csv::Error| DataError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        };
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        let mut header: Vec<String> = self.feature_names.clone();
        if self.ground_truth.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        w.write_record(&header).map_err(io_err)?;
        for (i, row) in self.rows.outer_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            if let Some(labels) = &self.ground_truth {
                let label = match &self.label_names {
                    Some(names) => names[labels[i] as usize].clone(),
                    None => labels[i].to_string(),
                };
                record.push(label);
            }
            w.write_record(&record).map_err(io_err)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path, delimiter: u8) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.write_csv(std::io::BufWriter::new(file), delimiter)
    }
}

/// Column name used when labels are written back out.
pub const LABEL_COLUMN: &str = "label";

fn content_hash(rows: &Array2<f64>, names: &[String]) -> String {
    let mut hasher = Sha256::new();
    let (n, m) = rows.dim();
    hasher.update((n as u64).to_le_bytes());
    hasher.update((m as u64).to_le_bytes());
    for v in rows.iter() {
        hasher.update(v.to_bits().to_le_bytes());
    }
    for name in names {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Reads a delimited file with a header row.
///
/// When `label_column` is given the column is removed from the matrix and
/// becomes the ground truth. Integer labels are kept as-is; any other label
/// text is mapped to ids in order of first appearance.
pub fn load_dataset(
    path: &Path,
    label_column: Option<&str>,
    delimiter: u8,
) -> Result<Dataset, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.display().to_string()));
    }
    let bytes = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&bytes, label_column, delimiter)
}

/// Same as [`load_dataset`] but from an in-memory buffer.
pub fn parse_dataset(
    bytes: &[u8],
    label_column: Option<&str>,
    delimiter: u8,
) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::ParseError {
            row: 0,
            col: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::EmptyDataset);
    }
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingLabelColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();
    if feature_names.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        // 1-based data row numbers; the header is row 0.
        let row = r + 1;
        let record = record.map_err(|e| DataError::ParseError {
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::ParseError {
                row,
                col: record.len().min(header.len()),
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        for &c in &feature_cols {
            values.push(parse_cell(&record[c], row, c)?);
        }
        if let Some(li) = label_idx {
            if record[li].is_empty() {
                return Err(DataError::NonNumericCell { row, col: li });
            }
            raw_labels.push(record[li].to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let rows = Array2::from_shape_vec((n, feature_names.len()), values)
        .expect("row lengths checked above");
    let (ground_truth, label_names) = if label_idx.is_some() {
        let (ids, names) = encode_labels(&raw_labels);
        (Some(ids), names)
    } else {
        (None, None)
    };
    Dataset::with_label_names(rows, feature_names, ground_truth, label_names)
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64, DataError> {
    if cell.is_empty() {
        return Err(DataError::NonNumericCell { row, col });
    }
    let v = f64::from_str(cell).map_err(|_| DataError::ParseError {
        row,
        col,
        message: format!("`{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonNumericCell { row, col });
    }
    Ok(v)
}

fn encode_labels(raw: &[String]) -> (Vec<i64>, Option<Vec<String>>) {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<i64>()).collect::<Result<Vec<_>, _>>() {
        return (ints, None);
    }
    let mut index: HashMap<&str, i64> = HashMap::new();
    let mut names = Vec::new();
    let ids = raw
        .iter()
        .map(|s| {
            *index.entry(s.as_str()).or_insert_with(|| {
                names.push(s.clone());
                names.len() as i64 - 1
            })
        })
        .collect();
    (ids, Some(names))
}

/// Feature scaling applied before centroid distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Standardize {
    #[default]
    None,
    Zscore,
    Minmax,
}

impl fmt::Display for Standardize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Standardize::None => "none",
            Standardize::Zscore => "zscore",
            Standardize::Minmax => "minmax",
        })
    }
}

impl FromStr for Standardize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Standardize::None),
            "zscore" => Ok(Standardize::Zscore),
            "minmax" => Ok(Standardize::Minmax),
            other => Err(format!("unknown standardization policy `{other}`")),
        }
    }
}

/// Returns a rescaled copy of `d`.
///
/// `zscore` uses the population standard deviation; zero-variance and
/// constant features become all-zero under both scaling policies.
pub fn standardize(d: &Dataset, policy: Standardize) -> Dataset {
    let mut rows = d.rows.clone();
    match policy {
        Standardize::None => return d.clone(),
        Standardize::Zscore => {
            let n = rows.nrows() as f64;
            for mut col in rows.axis_iter_mut(Axis(1)) {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    col.mapv_inplace(|v| (v - mean) / sd);
                } else {
                    col.fill(0.0);
                }
            }
        }
        Standardize::Minmax => {
            for mut col in rows.axis_iter_mut(Axis(1)) {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                if span > 0.0 {
                    col.mapv_inplace(|v| (v - lo) / span);
                } else {
                    col.fill(0.0);
                }
            }
        }
    }
    Dataset::with_label_names(
        rows,
        d.feature_names.clone(),
        d.ground_truth.clone(),
        d.label_names.clone(),
    )
    .expect("rescaling keeps values finite")
}
