//! CSV loading with column-kind inference and missing-value recognition.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::task::{TaskKind, TaskSpec};

/// Cells equal to one of these (after trimming) are treated as missing.
pub const MISSING_MARKERS: [&str; 4] = ["", "NA", "NaN", "?"];

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {got} fields, header has {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("target column {0:?} not found in header")]
    MissingTarget(String),
    #[error("dataset has {0} rows, at least {MIN_ROWS} are required")]
    TooFewRows(usize),
    #[error("dataset has no feature columns besides the target")]
    NoFeatures,
    #[error("target value missing in row {0}")]
    MissingTargetValue(usize),
    #[error("regression target {value:?} in row {row} is not numeric")]
    NonNumericTarget { row: usize, value: String },
    #[error("target column is constant")]
    ConstantTarget,
    #[error("{kind} task needs {expected} classes, target has {got}")]
    ClassCount {
        kind: TaskKind,
        expected: &'static str,
        got: usize,
    },
}

pub fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell.trim())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// Missing cells are NaN.
    Numeric(Vec<f64>),
    Categorical(Vec<Option<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v[row].is_nan(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class index per row; `names[i]` is the label of class `i`.
    Classes { labels: Vec<usize>, names: Vec<String> },
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_count(&self) -> usize {
        match self {
            Target::Classes { names, .. } => names.len(),
            Target::Values(_) => 0,
        }
    }

    /// Numeric view: class index for classification, the value for regression.
    pub fn as_f64(&self, row: usize) -> f64 {
        match self {
            Target::Classes { labels, .. } => labels[row] as f64,
            Target::Values(v) => v[row],
        }
    }
}

/// An immutable, validated table: feature columns plus the supervised target.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    source: Option<PathBuf>,
    columns: Vec<Column>,
    target_name: String,
    target: Target,
    n_rows: usize,
    hash: String,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>, task: &TaskSpec) -> Result<Dataset, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        let mut ds = Dataset::from_csv_str(&name, &text, task)?;
        ds.source = Some(path.to_path_buf());
        Ok(ds)
    }

    pub fn from_csv_str(name: &str, text: &str, task: &TaskSpec) -> Result<Dataset, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let target_idx = header
            .iter()
            .position(|h| h == task.target_column())
            .ok_or_else(|| DatasetError::MissingTarget(task.target_column().to_string()))?;

        let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            // Header is line 1, so data row i sits on line i + 2.
            if record.len() != header.len() {
                return Err(DatasetError::Ragged {
                    row: i + 2,
                    got: record.len(),
                    expected: header.len(),
                });
            }
            for (col, field) in record.iter().enumerate() {
                cells[col].push(field.trim().to_string());
            }
        }
        let n_rows = cells[0].len();
        if n_rows < MIN_ROWS {
            return Err(DatasetError::TooFewRows(n_rows));
        }
        if header.len() < 2 {
            return Err(DatasetError::NoFeatures);
        }

        let target_cells = std::mem::take(&mut cells[target_idx]);
        let target = build_target(&target_cells, task.kind())?;

        let columns = header
            .iter()
            .zip(cells)
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, (name, col))| infer_column(name, col))
            .collect();

        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();

        Ok(Dataset {
            name: name.to_string(),
            source: None,
            columns,
            target_name: task.target_column().to_string(),
            target,
            n_rows,
            hash,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn class_count(&self) -> usize {
        self.target.class_count()
    }

    /// Hex SHA-256 of the CSV text this dataset was parsed from.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }
}

fn infer_column(name: &str, cells: Vec<String>) -> Column {
    let parsed: Option<Vec<f64>> = cells
        .iter()
        .map(|c| {
            if is_missing(c) {
                Some(f64::NAN)
            } else {
                c.parse::<f64>().ok().filter(|v| v.is_finite())
            }
        })
        .collect();
    let data = match parsed {
        Some(values) => ColumnData::Numeric(values),
        None => ColumnData::Categorical(
            cells
                .into_iter()
                .map(|c| (!is_missing(&c)).then_some(c))
                .collect(),
        ),
    };
    Column {
        name: name.to_string(),
        data,
    }
}

fn build_target(cells: &[String], kind: TaskKind) -> Result<Target, DatasetError> {
    if let Some(row) = cells.iter().position(|c| is_missing(c)) {
        return Err(DatasetError::MissingTargetValue(row + 2));
    }
    if kind == TaskKind::Regression {
        let values = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::NonNumericTarget {
                        row: i + 2,
                        value: c.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().all(|&v| v == values[0]) {
            return Err(DatasetError::ConstantTarget);
        }
        return Ok(Target::Values(values));
    }

    let mut names: Vec<String> = cells.to_vec();
    names.sort();
    names.dedup();
    // Numeric labels order numerically so "10" follows "2".
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    }
    if names.len() < 2 {
        return Err(DatasetError::ConstantTarget);
    }
    match kind {
        TaskKind::BinaryClassification if names.len() != 2 => {
            return Err(DatasetError::ClassCount {
                kind,
                expected: "exactly 2",
                got: names.len(),
            })
        }
        _ => {}
    }
    let labels = cells
        .iter()
        .map(|c| names.iter().position(|n| n == c).expect("label in vocabulary"))
        .collect();
    Ok(Target::Classes { labels, names })
}
