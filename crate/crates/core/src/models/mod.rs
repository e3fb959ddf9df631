//! Multi-class classifiers built from scratch.
//!
//! Every model predicts scene ids. Internally the classes present in the
//! training labels are compacted to dense indices through a [`LabelSpace`].

mod forest;
mod gbt;
pub mod grid;
mod knn;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{rf_fit, ForestModel};
pub use gbt::{gbt_fit, log_loss, GbtModel};
pub use grid::{cv_accuracies, default_grid, grid_search, stratified_folds, truncate, CvRow, Family, GridResult, GridSpec};
pub use knn::{knn_fit, KnnModel};
pub use tree::{tree_fit, Binned, Tree, TreeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} is not below the class count {class_count}")]
    LabelOutOfRange { label: u8, class_count: u8 },
    #[error("dataset contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("matrix has {got} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("need at least 2 folds and no more folds than rows ({folds} folds, {n} rows)")]
    BadFolds { folds: usize, n: usize },
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape does not match data");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }
}

/// Dense indices for the labels seen in training, in ascending label order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub labels: Vec<u8>,
}

impl LabelSpace {
    pub fn fit(y: &[u8]) -> Self {
        let mut labels = y.to_vec();
        labels.sort_unstable();
        labels.dedup();
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: u8) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn encode(&self, y: &[u8]) -> Vec<usize> {
        y.iter()
            .map(|&l| self.index(l).expect("label outside the label space"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    pub class_count: u8,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<u8>, feature_names: Vec<String>, class_count: u8) -> Result<Self, ModelError> {
        if x.rows() == 0 {
            return Err(ModelError::EmptyDataset);
        }
        assert_eq!(x.rows(), y.len(), "row count of X and y differ");
        if let Some(&label) = y.iter().find(|&&l| l >= class_count) {
            return Err(ModelError::LabelOutOfRange { label, class_count });
        }
        for i in 0..x.rows() {
            if let Some(col) = x.row(i).iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { row: i, col });
            }
        }
        Ok(Self {
            x,
            y,
            feature_names,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_count: self.class_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Knn {
        n_neighbors: usize,
    },
    RandomForest {
        n_trees: usize,
        max_depth: Option<usize>,
        bootstrap: bool,
        seed: u64,
    },
    GradientBoost {
        n_trees: usize,
        max_depth: Option<usize>,
        learning_rate: f64,
        seed: u64,
    },
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Knn { .. } => Family::Knn,
            ModelSpec::RandomForest { .. } => Family::RandomForest,
            ModelSpec::GradientBoost { .. } => Family::GradientBoost,
        }
    }

    pub fn with_seed(&self, new_seed: u64) -> ModelSpec {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::Knn { .. } => {}
            ModelSpec::RandomForest { seed, .. } | ModelSpec::GradientBoost { seed, .. } => *seed = new_seed,
        }
        s
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParam(m.to_string()));
        match *self {
            ModelSpec::Knn { n_neighbors } if n_neighbors == 0 => bad("n_neighbors must be positive"),
            ModelSpec::RandomForest { n_trees: 0, .. } | ModelSpec::GradientBoost { n_trees: 0, .. } => {
                bad("n_trees must be positive")
            }
            ModelSpec::GradientBoost { learning_rate, .. } if !(learning_rate >= 0.0) || !learning_rate.is_finite() => {
                bad("learning_rate must be finite and non-negative")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Knn(KnnModel),
    RandomForest(ForestModel),
    GradientBoost(GbtModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ModelError> {
        match self {
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::RandomForest(m) => m.predict(x),
            TrainedModel::GradientBoost(m) => m.predict(x),
        }
    }

    pub fn as_forest(&self) -> Option<&ForestModel> {
        match self {
            TrainedModel::RandomForest(m) => Some(m),
            _ => None,
        }
    }
}

pub fn fit(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Ok(match *spec {
        ModelSpec::Knn { n_neighbors } => TrainedModel::Knn(knn_fit(data, n_neighbors)?),
        ModelSpec::RandomForest {
            n_trees,
            max_depth,
            bootstrap,
            seed,
        } => TrainedModel::RandomForest(rf_fit(data, n_trees, max_depth, bootstrap, seed)),
        ModelSpec::GradientBoost {
            n_trees,
            max_depth,
            learning_rate,
            seed,
        } => TrainedModel::GradientBoost(gbt_fit(data, n_trees, max_depth, learning_rate, seed)),
    })
}

pub(crate) fn check_width(expected: usize, x: &Matrix) -> Result<(), ModelError> {
    if x.cols() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            got: x.cols(),
        });
    }
    Ok(())
}

/// Most frequent index; ties go to the lowest index.
pub(crate) fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(y_true: &[u8], y_pred: &[u8]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len());
    if y_true.is_empty() {
        return 0.0;
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    hits as f64 / y_true.len() as f64
}
