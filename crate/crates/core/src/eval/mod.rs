//! Metrics, splits and the evaluation protocols.

pub mod coldstart;
pub mod experiment;
pub mod metrics;
pub mod split;

use thiserror::Error;

use crate::models::ModelError;

pub use coldstart::{run_cold_start, ColdStartParams, ColdStartReport, IterationResult, MeanStd, ScenarioSummary};
pub use experiment::{
    cross_validate, cross_validate_grouped, evaluate, evaluation_from, mean_std, run_clustered_experiment,
    run_pooled_experiment, ClusterResult, ClusteredReport, CvSummary, Evaluation, FamilyResult, PooledReport,
};
pub use metrics::{
    binary_balanced_accuracy, confusion, metrics, weighted_cluster_aggregate, weighted_mean, ClassMetrics,
    ConfusionMatrix, MetricReport, Scalars,
};
pub use split::{group_folds, split_households, split_rows};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} outside the {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("populations must be non-negative with a positive total")]
    InvalidPopulation,
    #[error("{households} households, need at least {needed}")]
    InsufficientHouseholds { households: usize, needed: usize },
    #[error("split left {train} training and {test} test rows")]
    EmptySplit { train: usize, test: usize },
    #[error("cannot make {folds} folds from {units} units")]
    BadFolds { folds: usize, units: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}
