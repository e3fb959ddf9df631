//! Cross-validated grid search.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, fit, Dataset, ModelError, ModelSpec, TrainedModel};
use crate::seed::derived_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Knn,
    RandomForest,
    GradientBoost,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::RandomForest, Family::GradientBoost, Family::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::RandomForest => "random_forest",
            Family::GradientBoost => "gradient_boost",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// Lattice of hyperparameters for one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub n_neighbors: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_trees: vec![50, 100, 200],
            max_depth: vec![Some(4), Some(8), Some(16), None],
            n_neighbors: vec![3, 5, 11, 25],
            learning_rate: vec![0.1, 0.3],
        }
    }
}

impl GridSpec {
    pub fn expand(&self, family: Family, seed: u64) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        match family {
            Family::Knn => {
                for &n_neighbors in &self.n_neighbors {
                    out.push(ModelSpec::Knn { n_neighbors });
                }
            }
            Family::RandomForest => {
                for &n_trees in &self.n_trees {
                    for &max_depth in &self.max_depth {
                        out.push(ModelSpec::RandomForest {
                            n_trees,
                            max_depth,
                            bootstrap: true,
                            seed,
                        });
                    }
                }
            }
            Family::GradientBoost => {
                for &n_trees in &self.n_trees {
                    for &max_depth in &self.max_depth {
                        for &learning_rate in &self.learning_rate {
                            out.push(ModelSpec::GradientBoost {
                                n_trees,
                                max_depth,
                                learning_rate,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn default_grid(family: Family, seed: u64) -> Vec<ModelSpec> {
    GridSpec::default().expand(family, seed)
}

/// Fold id per row. Rows of each class are shuffled and dealt round-robin so
/// every fold gets a near-equal share of every class. When some class has
/// fewer rows than folds the assignment ignores classes; the flag is false.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = derived_rng(seed, "folds", 0);
    let mut by_class: std::collections::BTreeMap<u8, Vec<usize>> = Default::default();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let stratified = by_class.values().all(|rows| rows.len() >= folds);
    let mut out = vec![0; y.len()];
    if stratified {
        let mut next = 0;
        for rows in by_class.values_mut() {
            rows.shuffle(&mut rng);
            for &i in rows.iter() {
                out[i] = next % folds;
                next += 1;
            }
        }
    } else {
        log::warn!("a class has fewer rows than the {folds} folds; using unstratified folds");
        let mut rows: Vec<usize> = (0..y.len()).collect();
        rows.shuffle(&mut rng);
        for (k, &i) in rows.iter().enumerate() {
            out[i] = k % folds;
        }
    }
    (out, stratified)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub spec: ModelSpec,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ModelSpec,
    pub best_mean: f64,
    /// |grid| x folds rows, grid order then fold order.
    pub table: Vec<CvRow>,
    pub stratified: bool,
}

fn n_trees(spec: &ModelSpec) -> Option<usize> {
    match spec {
        ModelSpec::Knn { .. } => None,
        ModelSpec::RandomForest { n_trees, .. } | ModelSpec::GradientBoost { n_trees, .. } => Some(*n_trees),
    }
}

fn with_trees(spec: &ModelSpec, n: usize) -> ModelSpec {
    let mut s = spec.clone();
    match &mut s {
        ModelSpec::Knn { .. } => {}
        ModelSpec::RandomForest { n_trees, .. } | ModelSpec::GradientBoost { n_trees, .. } => *n_trees = n,
    }
    s
}

/// The model restricted to its first `n` trees or rounds, which is exactly
/// the model a fit with `n_trees = n` produces.
pub fn truncate(model: &TrainedModel, n: usize) -> TrainedModel {
    let mut m = model.clone();
    match &mut m {
        TrainedModel::Knn(_) => {}
        TrainedModel::RandomForest(f) => f.trees.truncate(n),
        TrainedModel::GradientBoost(g) => {
            g.rounds.truncate(n);
            g.train_loss.truncate(n + 1);
        }
    }
    m
}

/// Tie-break order: fewer trees, shallower, fewer neighbors, then the JSON
/// form of the spec.
fn preference_key(spec: &ModelSpec) -> (usize, usize, usize, String) {
    let json = serde_json::to_string(spec).expect("spec serializes");
    match *spec {
        ModelSpec::Knn { n_neighbors } => (0, 0, n_neighbors, json),
        ModelSpec::RandomForest { n_trees, max_depth, .. } | ModelSpec::GradientBoost { n_trees, max_depth, .. } => {
            (n_trees, max_depth.unwrap_or(usize::MAX), 0, json)
        }
    }
}

/// Accuracy of every spec on every fold. Specs differing only in tree count
/// share one fit per fold.
pub fn cv_accuracies(grid: &[ModelSpec], data: &Dataset, fold_of: &[usize], folds: usize) -> Result<Vec<Vec<f64>>, ModelError> {
    // Group grid points by everything except n_trees.
    let mut groups: Vec<(ModelSpec, Vec<usize>)> = Vec::new();
    for (gi, spec) in grid.iter().enumerate() {
        let base = with_trees(spec, 0);
        match groups.iter_mut().find(|(b, _)| *b == base) {
            Some((_, members)) => members.push(gi),
            None => groups.push((base, vec![gi])),
        }
    }
    let tasks: Vec<(usize, usize)> = (0..groups.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let results = tasks
        .par_iter()
        .map(|&(g, f)| {
            let (base, members) = &groups[g];
            let max_trees = members.iter().filter_map(|&i| n_trees(&grid[i])).max().unwrap_or(0);
            let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
            let model = fit(&with_trees(base, max_trees), &data.subset(&train))?;
            let test_set = data.subset(&test);
            members
                .iter()
                .map(|&i| {
                    let m = match n_trees(&grid[i]) {
                        Some(n) if n < max_trees => truncate(&model, n),
                        _ => model.clone(),
                    };
                    Ok((i, accuracy(&test_set.y, &m.predict(&test_set.x)?)))
                })
                .collect::<Result<Vec<_>, ModelError>>()
                .map(|v| (f, v))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut acc = vec![vec![0.0; folds]; grid.len()];
    for (f, v) in results {
        for (i, a) in v {
            acc[i][f] = a;
        }
    }
    Ok(acc)
}

pub fn grid_search(grid: &[ModelSpec], data: &Dataset, folds: usize, seed: u64) -> Result<GridResult, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if folds < 2 || folds > data.len() {
        return Err(ModelError::BadFolds { folds, n: data.len() });
    }
    for s in grid {
        s.validate()?;
    }
    let (fold_of, stratified) = stratified_folds(&data.y, folds, seed);
    let acc = cv_accuracies(grid, data, &fold_of, folds)?;
    let means: Vec<f64> = acc.iter().map(|a| a.iter().sum::<f64>() / folds as f64).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| {
            means[b]
                .total_cmp(&means[a])
                .then_with(|| preference_key(&grid[a]).cmp(&preference_key(&grid[b])))
        })
        .expect("grid non-empty");
    let table = grid
        .iter()
        .zip(&acc)
        .flat_map(|(spec, a)| {
            a.iter().enumerate().map(|(fold, &accuracy)| CvRow {
                spec: spec.clone(),
                fold,
                accuracy,
            })
        })
        .collect();
    Ok(GridResult {
        best: grid[best].clone(),
        best_mean: means[best],
        table,
        stratified,
    })
}
