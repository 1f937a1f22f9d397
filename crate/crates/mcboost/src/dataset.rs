//! Dataset loading, label encoding, and train/test splitting.
//!
//! Two on-disk formats are supported: CSV (optional header, label in a
//! configurable column) and LIBSVM (`<label> <index>:<value> ...` with
//! 1-based feature indices, absent entries read as 0). Labels of any
//! numeric or string token are re-encoded to contiguous class ids
//! `0..K-1` by sorting the distinct original tokens ascending, numerically
//! when every token parses as a finite number, lexicographically otherwise.
//! The encoding is deterministic: two loads of the same file produce
//! bit-identical matrices and the same class order.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// On-disk format of a data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Libsvm,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "libsvm" => Ok(Format::Libsvm),
            other => Err(format!("unknown format '{other}' (expected csv or libsvm)")),
        }
    }
}

/// Loader settings. `label_column` applies to CSV only.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: Format,
    pub label_column: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: Format::Csv,
            label_column: 0,
        }
    }
}

/// Dense feature matrix with contiguous integer class labels.
///
/// Invariants: every feature value is finite, every label is in `[0, K)`,
/// `N >= 1`, `D >= 1`, `K >= 2`. `class_names` holds the original label
/// tokens in encoding order, so `class_names[labels[i]]` recovers the token
/// sample `i` carried in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from already-encoded parts, validating the invariants.
    pub fn from_parts(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let k = class_names.len();
        if features.rows() == 0 {
            return Err(DatasetError::Invalid("dataset has no rows".into()));
        }
        if features.cols() == 0 {
            return Err(DatasetError::Invalid("dataset has no features".into()));
        }
        if k < 2 {
            return Err(DatasetError::Invalid(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        if labels.len() != features.rows() {
            return Err(DatasetError::Invalid(
                "label count differs from row count".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(DatasetError::Invalid(format!(
                "label {bad} out of range 0..{k}"
            )));
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid("non-finite feature value".into()));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Original label token for an encoded class id.
    pub fn decode_label(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    /// New dataset holding the given rows (indices may repeat); the label
    /// mapping is shared with `self`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        if indices.is_empty() {
            return Err(DatasetError::Invalid("empty subset".into()));
        }
        let d = self.d();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            features: Matrix::from_vec(data, indices.len(), d),
            labels,
            class_names: self.class_names.clone(),
        })
    }

    /// Keeps only the rows whose class id is in `classes` (strictly
    /// ascending) and re-encodes labels to `0..classes.len()`.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<Self, DatasetError> {
        if classes.len() < 2 {
            return Err(DatasetError::Invalid("need at least 2 classes".into()));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) || classes[classes.len() - 1] >= self.k() {
            return Err(DatasetError::Invalid(
                "classes must be ascending and in range".into(),
            ));
        }
        let mut remap = vec![usize::MAX; self.k()];
        for (new, &old) in classes.iter().enumerate() {
            remap[old] = new;
        }
        let d = self.d();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.n() {
            let new = remap[self.labels[i]];
            if new != usize::MAX {
                data.extend_from_slice(self.row(i));
                labels.push(new);
            }
        }
        let names = classes
            .iter()
            .map(|&c| self.class_names[c].clone())
            .collect();
        Dataset::from_parts(Matrix::from_vec(data, labels.len(), d), labels, names)
    }
}

/// `N x K` matrix with `r[i][k] = 1` exactly when `labels[i] = k`, else 0.
/// Every row sums to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    m: Matrix,
}

impl IndicatorMatrix {
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.m.get(i, k)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.m.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }
}

/// Builds the class-indicator matrix of a dataset.
pub fn class_indicator(dataset: &Dataset) -> IndicatorMatrix {
    let mut m = Matrix::zeros(dataset.n(), dataset.k());
    for (i, &y) in dataset.labels().iter().enumerate() {
        m.set(i, y, 1.0);
    }
    IndicatorMatrix { m }
}

/// Loads a dataset and builds its label mapping from the file contents.
pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset, DatasetError> {
    let (rows, tokens, d) = parse_file(path.as_ref(), opts, None)?;
    let class_names = build_mapping(&tokens)?;
    finish(rows, tokens, d, class_names, true)
}

/// Loads a dataset using an existing label mapping (typically the training
/// mapping, so that a test file shares the training class encoding).
/// A label token absent from the mapping is an error. For LIBSVM files,
/// `expect_features` pads rows with zeros up to the training width; for CSV
/// files the width must match exactly.
pub fn load_dataset_with_mapping(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
    class_names: &[String],
    expect_features: Option<usize>,
) -> Result<Dataset, DatasetError> {
    let (rows, tokens, d) = parse_file(path.as_ref(), opts, expect_features)?;
    finish(rows, tokens, d, class_names.to_vec(), false)
}

/// Deterministically splits rows into two disjoint datasets covering all of
/// `dataset`. The first partition receives `round(N * fraction)` rows chosen
/// by a seeded shuffle; both partitions share the label mapping.
pub fn train_test_split(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "fraction {fraction} not in (0,1)"
        )));
    }
    let n = dataset.n();
    let n_first = (fraction * n as f64).round() as usize;
    if n_first == 0 || n_first >= n {
        return Err(DatasetError::Invalid(format!(
            "fraction {fraction} leaves an empty partition for n={n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let first = dataset.subset(&indices[..n_first])?;
    let second = dataset.subset(&indices[n_first..])?;
    Ok((first, second))
}

// ---- parsing internals ----

type RawRows = (Vec<Vec<f64>>, Vec<String>, usize);

fn parse_file(
    path: &Path,
    opts: &LoadOptions,
    expect_features: Option<usize>,
) -> Result<RawRows, DatasetError> {
    match opts.format {
        Format::Csv => parse_csv(path, opts.label_column, expect_features),
        Format::Libsvm => parse_libsvm(path, expect_features),
    }
}

fn parse_finite(token: &str) -> Option<f64> {
    token.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_csv(
    path: &Path,
    label_column: usize,
    expect_features: Option<usize>,
) -> Result<RawRows, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        // Header sniffing: the first row is a header when any feature field
        // fails to parse as a float at all. The label column is exempt
        // (labels may be arbitrary strings), and parseable-but-non-finite
        // values like "inf" are data errors, not header markers.
        if first {
            first = false;
            let is_header = record
                .iter()
                .enumerate()
                .any(|(c, f)| c != label_column && f.trim().parse::<f64>().is_err());
            if is_header {
                continue;
            }
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(DatasetError::Parse {
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if label_column >= w {
            return Err(DatasetError::Parse {
                line,
                message: format!("label column {label_column} out of range for {w} fields"),
            });
        }
        let mut row = Vec::with_capacity(w - 1);
        for (c, field) in record.iter().enumerate() {
            if c == label_column {
                let token = field.trim();
                if token.is_empty() {
                    return Err(DatasetError::Parse {
                        line,
                        message: "empty label".into(),
                    });
                }
                tokens.push(token.to_string());
            } else {
                match parse_finite(field) {
                    Some(v) => row.push(v),
                    None => {
                        return Err(DatasetError::Parse {
                            line,
                            message: format!("non-numeric or non-finite feature '{field}'"),
                        })
                    }
                }
            }
        }
        rows.push(row);
    }
    let d = width.map(|w| w - 1).unwrap_or(0);
    if let Some(expected) = expect_features {
        if d != expected && !rows.is_empty() {
            return Err(DatasetError::Invalid(format!(
                "expected {expected} features, file has {d}"
            )));
        }
    }
    Ok((rows, tokens, d))
}

fn parse_libsvm(path: &Path, expect_features: Option<usize>) -> Result<RawRows, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = lineno as u64 + 1;
        let mut parts = line.split_whitespace();
        let label = match parts.next() {
            Some(t) => t,
            None => continue, // blank line
        };
        tokens.push(label.to_string());
        let mut row = Vec::new();
        for part in parts {
            let (idx, val) = part.split_once(':').ok_or_else(|| DatasetError::Parse {
                line: lineno,
                message: format!("expected index:value, found '{part}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| DatasetError::Parse {
                line: lineno,
                message: format!("bad feature index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(DatasetError::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val = parse_finite(val).ok_or_else(|| DatasetError::Parse {
                line: lineno,
                message: format!("non-numeric or non-finite value '{val}'"),
            })?;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        sparse.push(row);
    }
    let d = match expect_features {
        Some(expected) => {
            if max_index > expected {
                return Err(DatasetError::Invalid(format!(
                    "feature index {max_index} exceeds expected dimension {expected}"
                )));
            }
            expected
        }
        None => max_index,
    };
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; d];
            for (idx, val) in entries {
                row[idx] = val;
            }
            row
        })
        .collect();
    Ok((rows, tokens, d))
}

/// Sorts distinct label tokens ascending, numerically when every token is a
/// finite number (tokens with equal value collapse to the first seen form),
/// lexicographically otherwise.
fn build_mapping(tokens: &[String]) -> Result<Vec<String>, DatasetError> {
    let numeric: Option<Vec<f64>> = tokens.iter().map(|t| parse_finite(t)).collect();
    let mut names: Vec<String> = Vec::new();
    match numeric {
        Some(values) => {
            let mut seen: Vec<(f64, &str)> = Vec::new();
            for (v, t) in values.iter().zip(tokens) {
                let v = if *v == 0.0 { 0.0 } else { *v }; // fold -0.0 into 0.0
                if !seen.iter().any(|(sv, _)| *sv == v) {
                    seen.push((v, t));
                }
            }
            seen.sort_by(|a, b| a.0.total_cmp(&b.0));
            names.extend(seen.into_iter().map(|(_, t)| t.to_string()));
        }
        None => {
            for t in tokens {
                if !names.iter().any(|n| n == t) {
                    names.push(t.clone());
                }
            }
            names.sort();
        }
    }
    Ok(names)
}

fn finish(
    rows: Vec<Vec<f64>>,
    tokens: Vec<String>,
    d: usize,
    class_names: Vec<String>,
    fresh_mapping: bool,
) -> Result<Dataset, DatasetError> {
    if rows.is_empty() {
        return Err(DatasetError::Invalid("file contains no data rows".into()));
    }
    if d == 0 {
        return Err(DatasetError::Invalid("no feature columns".into()));
    }
    // Index the mapping the same way it was built: by numeric value when
    // every class name is numeric, by exact token otherwise.
    let numeric_names: Option<Vec<f64>> = class_names.iter().map(|t| parse_finite(t)).collect();
    let lookup = |token: &str| -> Option<usize> {
        match &numeric_names {
            Some(values) => {
                let v = parse_finite(token)?;
                let v = if v == 0.0 { 0.0 } else { v };
                values.iter().position(|&nv| nv == v)
            }
            None => class_names.iter().position(|n| n == token),
        }
    };
    let mut labels = Vec::with_capacity(tokens.len());
    for (i, token) in tokens.iter().enumerate() {
        match lookup(token) {
            Some(id) => labels.push(id),
            None => {
                return Err(DatasetError::Parse {
                    line: i as u64 + 1,
                    message: format!("label '{token}' not present in the training mapping"),
                })
            }
        }
    }
    if fresh_mapping && class_names.len() < 2 {
        return Err(DatasetError::Invalid(format!(
            "need at least 2 classes, got {}",
            class_names.len()
        )));
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * d);
    for row in rows {
        data.extend_from_slice(&row);
    }
    Dataset::from_parts(Matrix::from_vec(data, n, d), labels, class_names)
}
