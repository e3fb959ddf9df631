use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, weighted_cluster_aggregate, MetricReport, Scalars};
use super::split::{distinct_count, group_folds, split_rows};
use super::EvalError;
use crate::models::{cv_accuracies, fit, stratified_folds, Dataset, Family, LabelSpace, ModelSpec, TrainedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub accuracies: Vec<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(accuracies: Vec<f64>) -> CvSummary {
    let (mean, std) = mean_std(&accuracies);
    CvSummary { mean, std, accuracies }
}

/// Stratified k-fold accuracy of one spec.
pub fn cross_validate(spec: &ModelSpec, data: &Dataset, folds: usize, seed: u64) -> Result<CvSummary, EvalError> {
    check_folds(folds, data.len())?;
    let (fold_of, _) = stratified_folds(&data.y, folds, seed);
    let acc = cv_accuracies(std::slice::from_ref(spec), data, &fold_of, folds)?;
    Ok(summarize(acc.into_iter().next().expect("one spec")))
}

/// k-fold accuracy with each group confined to one fold.
pub fn cross_validate_grouped<S: AsRef<str>>(
    spec: &ModelSpec,
    data: &Dataset,
    groups: &[S],
    folds: usize,
    seed: u64,
) -> Result<CvSummary, EvalError> {
    check_folds(folds, distinct_count(groups))?;
    let fold_of = group_folds(groups, folds, seed);
    let acc = cv_accuracies(std::slice::from_ref(spec), data, &fold_of, folds)?;
    Ok(summarize(acc.into_iter().next().expect("one spec")))
}

fn check_folds(folds: usize, units: usize) -> Result<(), EvalError> {
    if folds < 2 || folds > units {
        return Err(EvalError::BadFolds { folds, units });
    }
    Ok(())
}

/// Predictions on a test set with their metrics over `labels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Scene id of each metric row.
    pub labels: Vec<u8>,
    pub report: MetricReport,
    pub y_true: Vec<u8>,
    pub y_pred: Vec<u8>,
}

pub fn evaluate(model: &TrainedModel, test: &Dataset, labels: &LabelSpace) -> Result<Evaluation, EvalError> {
    let y_pred = model.predict(&test.x)?;
    evaluation_from(test.y.clone(), y_pred, labels)
}

/// Metrics of stored predictions over the labels that occur in either vector.
/// Every label must belong to `labels`.
pub fn evaluation_from(y_true: Vec<u8>, y_pred: Vec<u8>, labels: &LabelSpace) -> Result<Evaluation, EvalError> {
    if let Some(&l) = y_true.iter().chain(&y_pred).find(|&&l| labels.index(l).is_none()) {
        return Err(EvalError::LabelOutOfRange {
            label: usize::from(l),
            classes: labels.len(),
        });
    }
    let seen = LabelSpace::fit(&[y_true.as_slice(), y_pred.as_slice()].concat());
    let cm = confusion(&seen.encode(&y_true), &seen.encode(&y_pred), seen.len())?;
    Ok(Evaluation {
        labels: seen.labels,
        report: metrics(&cm)?,
        y_true,
        y_pred,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: Family,
    pub spec: ModelSpec,
    pub evaluation: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub n_train: usize,
    pub n_test: usize,
    pub results: Vec<FamilyResult>,
}

/// Train each spec on one random row split of all data and score it on the
/// held-out rows.
pub fn run_pooled_experiment(data: &Dataset, specs: &[ModelSpec], test_frac: f64, seed: u64) -> Result<PooledReport, EvalError> {
    let labels = LabelSpace::fit(&data.y);
    let (train, test) = split_rows(data.len(), test_frac, seed);
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::EmptySplit {
            train: train.len(),
            test: test.len(),
        });
    }
    let (train_set, test_set) = (data.subset(&train), data.subset(&test));
    let results = specs
        .iter()
        .map(|spec| {
            let model = fit(spec, &train_set)?;
            Ok(FamilyResult {
                family: spec.family(),
                spec: spec.clone(),
                evaluation: evaluate(&model, &test_set, &labels)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(PooledReport {
        n_train: train.len(),
        n_test: test.len(),
        results,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub cluster: usize,
    /// Entities assigned to the cluster; the aggregation weight.
    pub population: usize,
    pub rows: usize,
    pub n_test: usize,
    pub evaluation: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteredReport {
    pub clusters: Vec<ClusterResult>,
    pub weighted: Scalars,
    /// Clusters with too few rows to split, left out of the aggregate.
    pub skipped: Vec<usize>,
}

/// The pooled protocol run separately inside each cluster, with the same
/// seed, then averaged with entity-count weights.
pub fn run_clustered_experiment(
    data: &Dataset,
    cluster_of_row: &[usize],
    populations: &BTreeMap<usize, usize>,
    spec: &ModelSpec,
    test_frac: f64,
    seed: u64,
) -> Result<ClusteredReport, EvalError> {
    assert_eq!(cluster_of_row.len(), data.len());
    let mut rows_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cluster_of_row.iter().enumerate() {
        rows_of.entry(c).or_default().push(i);
    }
    let mut clusters = Vec::new();
    let mut skipped = Vec::new();
    for (&cluster, rows) in &rows_of {
        let subset = data.subset(rows);
        match run_pooled_experiment(&subset, std::slice::from_ref(spec), test_frac, seed) {
            Ok(mut report) => {
                let result = report.results.pop().expect("one spec");
                clusters.push(ClusterResult {
                    cluster,
                    population: populations.get(&cluster).copied().unwrap_or(rows.len()),
                    rows: rows.len(),
                    n_test: report.n_test,
                    evaluation: result.evaluation,
                });
            }
            Err(EvalError::EmptySplit { .. }) => {
                log::warn!("cluster {cluster} has {} rows, too few to split; skipped", rows.len());
                skipped.push(cluster);
            }
            Err(e) => return Err(e),
        }
    }
    let weighted = weighted_cluster_aggregate(
        &clusters
            .iter()
            .map(|c| (c.evaluation.report.scalars(), c.population as f64))
            .collect::<Vec<_>>(),
    )?;
    Ok(ClusteredReport {
        clusters,
        weighted,
        skipped,
    })
}
