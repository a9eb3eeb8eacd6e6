//! Labeled tabular data, the stratified 40/40/20 split and synthetic datasets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::seed;

pub const TRAIN_FRACTION: f64 = 0.4;
pub const VALIDATION_FRACTION: f64 = 0.4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("non-numeric cell `{value}` at row {row}, column `{column}`")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("class {class} has only {count} rows; at least 3 are needed to split")]
    ClassTooSmall { class: usize, count: usize },
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub column_names: Vec<String>,
    /// Original label values, indexed by encoded class id.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, column_names: Vec<String>) -> Self {
        assert_eq!(features.rows(), labels.len(), "one label per row");
        assert_eq!(features.cols(), column_names.len(), "one name per column");
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self {
            features,
            labels,
            column_names,
            class_names,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            column_names: self.column_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset {
            features: self.features.vstack(&other.features),
            labels,
            column_names: self.column_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Writes the dataset as CSV with the label column last.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.column_names.clone();
        header.push(label_column.to_string());
        w.write_record(&header)?;
        for (row, &label) in self.features.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.class_names[label].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a headed CSV. Labels are re-encoded to `0..c` by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    read_csv(reader, label_column)
}

/// Same as [`load_csv`] for in-memory text.
pub fn parse_csv(text: &str, label_column: &str) -> Result<Dataset, DataError> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    read_csv(reader, label_column)
}

fn read_csv<R: std::io::Read>(mut reader: csv::Reader<R>, label_column: &str) -> Result<Dataset, DataError> {
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let column_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if column_names.is_empty() {
        return Err(DataError::NoFeatures);
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // Row numbers count the header as row 1.
        let row_no = r + 2;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row: row_no,
                found: record.len(),
                expected: header.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let class = match class_names.iter().position(|n| n == cell) {
                    Some(k) => k,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(class);
            } else {
                let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                    DataError::NonNumericCell {
                        row: row_no,
                        column: header[c].clone(),
                        value: cell.to_string(),
                    }
                })?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(Dataset {
        features: Matrix::from_vec(labels.len(), column_names.len(), values),
        labels,
        column_names,
        class_names,
    })
}

/// Row-index lists of a train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub manifest: SplitManifest,
}

impl SplitDataset {
    pub fn split_seed(&self) -> u64 {
        self.manifest.seed
    }

    /// Rebuilds the partition recorded in a manifest.
    pub fn from_manifest(ds: &Dataset, manifest: SplitManifest) -> Self {
        Self {
            train: ds.subset(&manifest.train),
            validation: ds.subset(&manifest.validation),
            test: ds.subset(&manifest.test),
            manifest,
        }
    }
}

/// Stratified 40/40/20 partition, deterministic in `seed`.
///
/// Subset sizes are `round(0.4 n)`, `round(0.4 n)` and the remainder. Per-class
/// counts are the floor or ceiling of the class's ideal share, with the
/// rounding chosen so the subset totals come out exactly.
pub fn split(ds: &Dataset, seed: u64) -> Result<SplitDataset, DataError> {
    let n = ds.n_rows();
    let n_classes = ds.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < 3 {
            return Err(DataError::ClassTooSmall {
                class,
                count: rows.len(),
            });
        }
    }

    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let n_val = (VALIDATION_FRACTION * n as f64).round() as usize;
    let totals = [n_train, n_val, n - n_train - n_val];
    let fractions = [TRAIN_FRACTION, VALIDATION_FRACTION, 1.0 - TRAIN_FRACTION - VALIDATION_FRACTION];
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let counts = controlled_rounding(&sizes, &fractions, &totals);

    let mut rng = seed::rng_from(seed);
    let mut manifest = SplitManifest {
        seed,
        train: Vec::with_capacity(totals[0]),
        validation: Vec::with_capacity(totals[1]),
        test: Vec::with_capacity(totals[2]),
    };
    for (rows, c) in by_class.iter().zip(&counts) {
        let mut rows = rows.clone();
        rows.shuffle(&mut rng);
        manifest.train.extend_from_slice(&rows[..c[0]]);
        manifest.validation.extend_from_slice(&rows[c[0]..c[0] + c[1]]);
        manifest.test.extend_from_slice(&rows[c[0] + c[1]..]);
    }
    manifest.train.sort_unstable();
    manifest.validation.sort_unstable();
    manifest.test.sort_unstable();
    Ok(SplitDataset::from_manifest(ds, manifest))
}

/// Rounds the table `sizes[c] * fractions[j]` to integers with row sums
/// `sizes[c]` and column sums `totals[j]`, each entry the floor or ceiling of
/// its ideal value.
fn controlled_rounding(sizes: &[usize], fractions: &[f64; 3], totals: &[usize; 3]) -> Vec<[usize; 3]> {
    let mut table: Vec<[usize; 3]> = Vec::with_capacity(sizes.len());
    let mut frac: Vec<[f64; 3]> = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let mut row = [0usize; 3];
        let mut fr = [0f64; 3];
        for j in 0..3 {
            let ideal = s as f64 * fractions[j];
            // Guard against 0.4 * 5 = 2.0000000000000004 style noise.
            let fl = (ideal + 1e-9).floor();
            row[j] = fl as usize;
            fr[j] = (ideal - fl).max(0.0);
        }
        table.push(row);
        frac.push(fr);
    }
    let mut row_left: Vec<usize> = sizes
        .iter()
        .zip(&table)
        .map(|(&s, r)| s - r.iter().sum::<usize>())
        .collect();
    let mut col_left = [0usize; 3];
    for j in 0..3 {
        col_left[j] = totals[j] - table.iter().map(|r| r[j]).sum::<usize>();
    }

    // Ryser-style greedy: serve rows with the most leftover units first, each
    // unit going to the column with the most remaining demand, preferring the
    // largest fractional part among equals.
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| row_left[b].cmp(&row_left[a]).then(a.cmp(&b)));
    for c in order {
        let mut cols: Vec<usize> = (0..3).collect();
        cols.sort_by(|&a, &b| {
            col_left[b]
                .cmp(&col_left[a])
                .then(frac[c][b].total_cmp(&frac[c][a]))
                .then(a.cmp(&b))
        });
        for &j in cols.iter().take(row_left[c]) {
            debug_assert!(col_left[j] > 0);
            table[c][j] += 1;
            col_left[j] -= 1;
        }
        row_left[c] = 0;
    }
    table
}

/// Six standard-normal columns; label 1 iff `x0 * x1 > 0`, flipped with
/// probability `noise_rate`. No single axis-parallel threshold separates the
/// classes but the product feature does.
pub fn synth_interaction(n: usize, noise_rate: f64, seed: u64) -> Dataset {
    let mut rng = seed::rng_from(seed);
    let d = 6;
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut y = usize::from(row[0] * row[1] > 0.0);
        if rng.random::<f64>() < noise_rate {
            y = 1 - y;
        }
        values.extend_from_slice(&row);
        labels.push(y);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let mut ds = Dataset::new(Matrix::from_vec(n, d, values), labels, names);
    ds.class_names = vec!["0".into(), "1".into()];
    ds
}
