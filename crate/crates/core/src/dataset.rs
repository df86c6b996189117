//! Tabular classification data: CSV loading, min–max normalization and the
//! ε-ball geometry every perturbation lives in.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: malformed CSV record: {message}")]
    Parse { row: u64, message: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: u64, expected: usize, found: usize },
    #[error("row {row}, column {column} ({name}): missing value")]
    MissingCell { row: u64, column: usize, name: String },
    #[error("row {row}, column {column} ({name}): `{value}` is not numeric")]
    NonNumeric {
        row: u64,
        column: usize,
        name: String,
        value: String,
    },
    #[error("label column {column} is out of range for {columns} columns")]
    LabelColumn { column: usize, columns: usize },
    #[error("dataset has no instances")]
    Empty,
    #[error("dataset needs at least two columns (features and a label)")]
    NoFeatures,
    #[error("{0}")]
    Invalid(String),
}

/// Which column holds the class label and whether the first line is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// `None` selects the last column.
    pub label_column: Option<usize>,
    pub header: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_column: None,
            header: true,
        }
    }
}

/// A parsed CSV file before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Original label text, indexed by class.
    pub class_names: Vec<String>,
}

impl RawTable {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_csv(file, &name, schema)
}

/// Parses CSV text. Rows are reported 1-based, counting the header line.
pub fn parse_csv<R: Read>(reader: R, name: &str, schema: &CsvSchema) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| DataError::Parse {
            row: e.position().map(|p| p.line()).unwrap_or(row),
            message: e.to_string(),
        })?;
        // blank lines
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((row, rec));
    }

    let mut iter = records.into_iter();
    let header = if schema.header { iter.next() } else { None };
    let body: Vec<_> = iter.collect();
    let width = header
        .as_ref()
        .map(|(_, r)| r.len())
        .or_else(|| body.first().map(|(_, r)| r.len()))
        .ok_or(DataError::Empty)?;
    if width < 2 {
        return Err(DataError::NoFeatures);
    }
    let label_col = schema.label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(DataError::LabelColumn {
            column: label_col,
            columns: width,
        });
    }
    let column_names: Vec<String> = match &header {
        Some((_, r)) => r.iter().map(str::to_string).collect(),
        None => (0..width).map(|j| format!("x{j}")).collect(),
    };

    let mut rows = Vec::with_capacity(body.len());
    let mut label_text = Vec::with_capacity(body.len());
    for (row, rec) in &body {
        if rec.len() != width {
            return Err(DataError::RaggedRow {
                row: *row,
                expected: width,
                found: rec.len(),
            });
        }
        let mut values = Vec::with_capacity(width - 1);
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(DataError::MissingCell {
                    row: *row,
                    column: j,
                    name: column_names[j].clone(),
                });
            }
            if j == label_col {
                label_text.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row: *row,
                column: j,
                name: column_names[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumeric {
                    row: *row,
                    column: j,
                    name: column_names[j].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    let (labels, class_names) = index_labels(&label_text);
    let feature_names = column_names
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != label_col)
        .map(|(_, n)| n)
        .collect();
    Ok(RawTable {
        name: name.to_string(),
        feature_names,
        rows,
        labels,
        class_names,
    })
}

/// Integral labels are indexed in ascending numeric order, anything else in
/// order of first appearance.
fn index_labels(text: &[String]) -> (Vec<usize>, Vec<String>) {
    let ints: Option<Vec<i64>> = text.iter().map(|s| s.parse::<i64>().ok()).collect();
    let class_names: Vec<String> = match &ints {
        Some(values) => {
            let mut distinct = values.clone();
            distinct.sort_unstable();
            distinct.dedup();
            distinct.iter().map(|v| v.to_string()).collect()
        }
        None => {
            let mut seen = Vec::new();
            for s in text {
                if !seen.contains(s) {
                    seen.push(s.clone());
                }
            }
            seen
        }
    };
    let lookup: HashMap<String, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let labels = match ints {
        Some(values) => values.iter().map(|v| lookup[&v.to_string()]).collect(),
        None => text.iter().map(|s| lookup[s]).collect(),
    };
    (labels, class_names)
}

/// Row-major storage for `len` points of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0, "points need a positive dimension");
        assert_eq!(data.len() % dim, 0, "data length must be a multiple of dim");
        Points { data, dim }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "ragged rows");
            data.extend_from_slice(r);
        }
        Points::new(data, dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Per-feature `(min, max)` of the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub ranges: Vec<(f64, f64)>,
}

impl FeatureScaling {
    pub fn is_constant(&self, feature: usize) -> bool {
        let (lo, hi) = self.ranges[feature];
        lo == hi
    }

    pub fn normalize_value(&self, feature: usize, raw: f64) -> f64 {
        let (lo, hi) = self.ranges[feature];
        if lo == hi {
            0.5
        } else {
            (raw - lo) / (hi - lo)
        }
    }

    /// Constant features map back to their single raw value.
    pub fn denormalize_value(&self, feature: usize, unit: f64) -> f64 {
        let (lo, hi) = self.ranges[feature];
        if lo == hi {
            lo
        } else {
            lo + unit * (hi - lo)
        }
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.denormalize_value(j, v))
            .collect()
    }
}

/// Normalized instances, labels and the perturbation radius.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    instances: Points,
    labels: Vec<usize>,
    class_count: usize,
    epsilon: f64,
    splittable: Vec<bool>,
}

impl Dataset {
    /// Builds a dataset from rows that are already in normalized units.
    pub fn from_rows(
        name: &str,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_count: usize,
        epsilon: f64,
    ) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(DataError::NoFeatures);
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(DataError::Invalid("rows have different lengths".into()));
        }
        let instances = Points::from_rows(&rows);
        let splittable = (0..dim).map(|_| true).collect();
        Dataset::new(name, instances, labels, class_count, epsilon, splittable)
    }

    pub fn new(
        name: &str,
        instances: Points,
        labels: Vec<usize>,
        class_count: usize,
        epsilon: f64,
        splittable: Vec<bool>,
    ) -> Result<Self, DataError> {
        if instances.is_empty() {
            return Err(DataError::Empty);
        }
        if instances.len() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        if class_count < 2 {
            return Err(DataError::Invalid("at least two classes are required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::Invalid(format!(
                "label {bad} is not below class count {class_count}"
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DataError::Invalid(format!("epsilon {epsilon} must be a finite non-negative number")));
        }
        if let Some(v) = instances.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::Invalid(format!("feature value {v} lies outside [0, 1]")));
        }
        if splittable.len() != instances.dim() {
            return Err(DataError::Invalid("splittable flags do not match feature count".into()));
        }
        Ok(Dataset {
            name: name.to_string(),
            instances,
            labels,
            class_count,
            epsilon,
            splittable,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn instances(&self) -> &Points {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.instances.dim()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Features that carry more than one value; constant columns are never
    /// worth splitting on.
    pub fn splittable(&self) -> &[bool] {
        &self.splittable
    }

    /// Same data with another radius.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, DataError> {
        Dataset::new(
            &self.name,
            self.instances.clone(),
            self.labels.clone(),
            self.class_count,
            epsilon,
            self.splittable.clone(),
        )
    }

    /// The feasible interval for feature `j` of instance `i`: the ε-ball
    /// clipped to the unit box.
    #[inline]
    pub fn feasible_interval(&self, i: usize, j: usize) -> (f64, f64) {
        feasible_interval(self.instances.row(i)[j], self.epsilon)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

#[inline]
pub fn feasible_interval(x: f64, epsilon: f64) -> (f64, f64) {
    ((x - epsilon).max(0.0), (x + epsilon).min(1.0))
}

/// Min–max scales every feature into `[0, 1]`. Constant columns become 0.5
/// and are flagged as not splittable.
pub fn normalize(raw: &RawTable, epsilon: f64) -> Result<(Dataset, FeatureScaling), DataError> {
    if raw.rows.is_empty() {
        return Err(DataError::Empty);
    }
    let d = raw.feature_count();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for row in &raw.rows {
        for (j, &v) in row.iter().enumerate() {
            ranges[j].0 = ranges[j].0.min(v);
            ranges[j].1 = ranges[j].1.max(v);
        }
    }
    let scaling = FeatureScaling { ranges };
    let mut data = Vec::with_capacity(raw.rows.len() * d);
    for row in &raw.rows {
        for (j, &v) in row.iter().enumerate() {
            data.push(scaling.normalize_value(j, v).clamp(0.0, 1.0));
        }
    }
    let splittable = (0..d).map(|j| !scaling.is_constant(j)).collect();
    let class_count = raw.class_count().max(2);
    let ds = Dataset::new(
        &raw.name,
        Points::new(data, d),
        raw.labels.clone(),
        class_count,
        epsilon,
        splittable,
    )?;
    Ok((ds, scaling))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RawTable, DataError> {
        parse_csv(text.as_bytes(), "t", &CsvSchema::default())
    }

    #[test]
    fn string_labels_follow_first_appearance() {
        let t = parse("a,b,label\n1,2,A\n3,4,B\n5,6,A\n").unwrap();
        assert_eq!(t.labels, vec![0, 1, 0]);
        assert_eq!(t.class_names, vec!["A", "B"]);
        assert_eq!(t.rows[1], vec![3.0, 4.0]);
    }

    #[test]
    fn integral_labels_are_sorted() {
        let t = parse("a,label\n1,4\n2,2\n3,4\n").unwrap();
        assert_eq!(t.class_names, vec!["2", "4"]);
        assert_eq!(t.labels, vec![1, 0, 1]);
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let mut text = String::from("a,b,label\n");
        for _ in 0..5 {
            text.push_str("1,2,x\n");
        }
        text.push_str("1,,x\n");
        match parse(&text) {
            Err(DataError::MissingCell { row, column, name }) => {
                assert_eq!(row, 7);
                assert_eq!(column, 1);
                assert_eq!(name, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("row 7") && msg.contains("column 1"), "{msg}");
    }

    #[test]
    fn ragged_and_non_numeric_rows_fail() {
        assert!(matches!(
            parse("a,b,l\n1,2,x\n1,x\n"),
            Err(DataError::RaggedRow { row: 3, expected: 3, found: 2 })
        ));
        assert!(matches!(
            parse("a,b,l\n1,oops,x\n"),
            Err(DataError::NonNumeric { row: 2, column: 1, .. })
        ));
    }

    #[test]
    fn label_column_can_be_first() {
        let schema = CsvSchema {
            label_column: Some(0),
            header: false,
        };
        let t = parse_csv("yes,0.5,1\nno,0.25,2\n".as_bytes(), "t", &schema).unwrap();
        assert_eq!(t.labels, vec![0, 1]);
        assert_eq!(t.rows[1], vec![0.25, 2.0]);
        assert_eq!(t.feature_names, vec!["x1", "x2"]);
    }

    #[test]
    fn min_max_endpoints_and_constant_columns() {
        let t = parse("a,b,l\n2,5,0\n4,5,1\n6,5,0\n").unwrap();
        let (ds, scaling) = normalize(&t, 0.1).unwrap();
        let col0: Vec<f64> = ds.instances().rows().map(|r| r[0]).collect();
        let col1: Vec<f64> = ds.instances().rows().map(|r| r[1]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        assert_eq!(col1, vec![0.5, 0.5, 0.5]);
        assert_eq!(ds.splittable(), &[true, false]);
        assert_eq!(ds.epsilon(), 0.1);
        for (raw, norm) in t.rows.iter().zip(ds.instances().rows()) {
            let back = scaling.denormalize(norm);
            assert!((back[0] - raw[0]).abs() < 1e-12);
            assert_eq!(back[1], 5.0);
        }
    }

    #[test]
    fn invalid_datasets_are_rejected() {
        assert!(Dataset::from_rows("x", vec![vec![0.5]], vec![2], 2, 0.1).is_err());
        assert!(Dataset::from_rows("x", vec![vec![1.5]], vec![0], 2, 0.1).is_err());
        assert!(Dataset::from_rows("x", vec![vec![0.5]], vec![0], 2, -0.1).is_err());
        assert!(Dataset::from_rows("x", vec![], vec![], 2, 0.1).is_err());
    }

    #[test]
    fn feasible_interval_is_clipped() {
        assert_eq!(feasible_interval(0.1, 0.3), (0.0, 0.4));
        assert_eq!(feasible_interval(0.5, 0.0), (0.5, 0.5));
        let (lo, hi) = feasible_interval(0.9, 0.3);
        assert!((lo - 0.6).abs() < 1e-15);
        assert_eq!(hi, 1.0);
    }
}
