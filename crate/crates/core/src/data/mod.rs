//! Party tables: ingestion, vertical partitioning, id alignment checks and synthetic data.

mod blobs;
mod csvio;
mod split;

use nalgebra::DMatrix;

pub use blobs::{gen_blobs, LabelKind};
pub use csvio::{attach_labels, load_csv, load_labels, write_csv, write_labels};
pub use split::{check_alignment, join_columns, vertical_split, write_split, Alignment};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: missing header row")]
    MissingHeader { path: String },
    #[error("{path}: first column must be \"id\", found {found:?}")]
    MissingIdColumn { path: String, found: String },
    #[error("{path}: no \"label\" column")]
    MissingLabelColumn { path: String },
    #[error("{path}: row {row}, column {column:?}: {value:?} is not a finite number")]
    NonNumeric {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}: {value:?} is not a valid id")]
    BadId {
        path: String,
        row: usize,
        value: String,
    },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: String,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("ids must be sorted ascending")]
    UnsortedIds,
    #[error("feature block has {values} values, expected {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        values: usize,
    },
    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("label ids do not match feature ids: {0}")]
    LabelIds(String),
    #[error("label {0} is not a binary class label")]
    BadLabel(f64),
    #[error("cannot split {features} feature columns across {parties} parties")]
    TooFewFeatures { features: usize, parties: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One party's slice of a vertically partitioned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyTable {
    name: String,
    ids: Vec<u64>,
    features: Vec<f64>,
    feature_names: Vec<String>,
    labels: Option<Vec<f64>>,
}

impl PartyTable {
    /// `features` is row-major `ids.len() x feature_names.len()`. Ids must be unique and
    /// ascending.
    pub fn new(
        name: impl Into<String>,
        ids: Vec<u64>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Option<Vec<f64>>,
    ) -> Result<Self, DataError> {
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(DataError::DuplicateId(w[0]));
            }
            if w[0] > w[1] {
                return Err(DataError::UnsortedIds);
            }
        }
        if features.len() != ids.len() * feature_names.len() {
            return Err(DataError::Shape {
                rows: ids.len(),
                cols: feature_names.len(),
                values: features.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != ids.len() {
                return Err(DataError::LabelCount {
                    labels: l.len(),
                    rows: ids.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            ids,
            features,
            feature_names,
            labels,
        })
    }

    /// Builds a table from unsorted rows, sorting them by id.
    pub fn from_rows(
        name: impl Into<String>,
        mut rows: Vec<(u64, Vec<f64>, Option<f64>)>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        rows.sort_by_key(|r| r.0);
        let has_labels = rows.first().is_some_and(|r| r.2.is_some());
        let mut ids = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * feature_names.len());
        let mut labels = Vec::new();
        for (id, values, label) in rows {
            ids.push(id);
            features.extend(values);
            if let Some(l) = label {
                labels.push(l);
            }
        }
        Self::new(
            name,
            ids,
            feature_names,
            features,
            has_labels.then_some(labels),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<f64>>) -> Result<(), DataError> {
        if let Some(l) = &labels {
            if l.len() != self.ids.len() {
                return Err(DataError::LabelCount {
                    labels: l.len(),
                    rows: self.ids.len(),
                });
            }
        }
        self.labels = labels;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, k)).collect()
    }

    /// Row index of `id`.
    pub fn row_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Row indices for `ids`, failing on the first unknown id.
    pub fn rows_of(&self, ids: &[u64]) -> Result<Vec<usize>, u64> {
        ids.iter().map(|&id| self.row_of(id).ok_or(id)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows(), self.n_features(), &self.features)
    }

    /// Submatrix of the given rows.
    pub fn rows_matrix(&self, rows: &[usize]) -> DMatrix<f64> {
        let d = self.n_features();
        DMatrix::from_fn(rows.len(), d, |i, k| self.value(rows[i], k))
    }

    /// New table with the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Option<PartyTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.feature_names.iter().position(|f| f == n))
            .collect::<Option<_>>()?;
        let features = (0..self.n_rows())
            .flat_map(|i| idx.iter().map(move |&k| self.value(i, k)))
            .collect();
        Some(PartyTable {
            name: self.name.clone(),
            ids: self.ids.clone(),
            features,
            feature_names: names.to_vec(),
            labels: self.labels.clone(),
        })
    }
}

/// Labels as `{-1, +1}`; accepts `{0, 1}` input (0 becomes -1).
pub fn to_pm1(labels: &[f64]) -> Result<Vec<f64>, DataError> {
    let zero_one = labels.iter().all(|&y| y == 0.0 || y == 1.0);
    labels
        .iter()
        .map(|&y| match y {
            y if y == 1.0 => Ok(1.0),
            y if y == -1.0 => Ok(-1.0),
            y if y == 0.0 && zero_one => Ok(-1.0),
            y => Err(DataError::BadLabel(y)),
        })
        .collect()
}

/// Labels as `{0, 1}`; accepts `{-1, +1}` input (-1 becomes 0).
pub fn to_zero_one(labels: &[f64]) -> Result<Vec<f64>, DataError> {
    let pm1 = labels.iter().all(|&y| y == -1.0 || y == 1.0);
    labels
        .iter()
        .map(|&y| match y {
            y if y == 1.0 => Ok(1.0),
            y if y == 0.0 => Ok(0.0),
            y if y == -1.0 && pm1 => Ok(0.0),
            y => Err(DataError::BadLabel(y)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_invariants() {
        let names = vec!["a".to_string()];
        assert!(matches!(
            PartyTable::new("t", vec![1, 1], names.clone(), vec![0.0, 0.0], None),
            Err(DataError::DuplicateId(1))
        ));
        assert!(matches!(
            PartyTable::new("t", vec![2, 1], names.clone(), vec![0.0, 0.0], None),
            Err(DataError::UnsortedIds)
        ));
        assert!(matches!(
            PartyTable::new("t", vec![1, 2], names, vec![0.0], None),
            Err(DataError::Shape { .. })
        ));
    }

    #[test]
    fn label_conversions() {
        assert_eq!(to_pm1(&[0.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(to_pm1(&[-1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert!(to_pm1(&[-1.0, 0.0]).is_err());
        assert_eq!(to_zero_one(&[-1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(to_zero_one(&[0.5]).is_err());
    }

    #[test]
    fn row_lookup_uses_sorted_ids() {
        let t = PartyTable::from_rows(
            "t",
            vec![(5, vec![50.0], None), (1, vec![10.0], None), (3, vec![30.0], None)],
            vec!["x".into()],
        )
        .unwrap();
        assert_eq!(t.ids(), &[1, 3, 5]);
        assert_eq!(t.column(0), vec![10.0, 30.0, 50.0]);
        assert_eq!(t.row_of(5), Some(2));
        assert_eq!(t.rows_of(&[3, 4]), Err(4));
    }
}
