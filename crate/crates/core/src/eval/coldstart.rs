//! Prediction for households never seen in training.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{cross_validate_grouped, mean_std};
use super::split::{distinct_count, split_households};
use super::EvalError;
use crate::models::{accuracy, fit, Dataset, ModelSpec};
use crate::seed::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdStartParams {
    /// Fractions of households held out for testing.
    pub scenarios: Vec<f64>,
    pub iterations: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ColdStartParams {
    fn default() -> Self {
        Self {
            scenarios: vec![0.10, 0.25, 0.40],
            iterations: 20,
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub test_frac: f64,
    pub iteration: usize,
    pub train_households: usize,
    pub test_households: usize,
    pub train_cv: f64,
    pub test_cv: f64,
    pub independent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub test_frac: f64,
    pub train_cv: MeanStd,
    pub test_cv: MeanStd,
    pub independent: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdStartReport {
    pub clustered: bool,
    /// What clustered averages are weighted by.
    pub weighting: String,
    pub scenarios: Vec<ScenarioSummary>,
    pub iterations: Vec<IterationResult>,
}

/// Row-weighted accuracies of one train/test household split.
struct Scores {
    train_cv: f64,
    test_cv: f64,
    independent: f64,
}

fn folds_for(units: usize, folds: usize) -> Option<usize> {
    let f = folds.min(units);
    (f >= 2).then_some(f)
}

/// The three accuracies on one part of the data (a whole split or one
/// cluster of it), each paired with its row weight. `None` marks a score that
/// cannot be computed, such as CV over a single household.
#[allow(clippy::type_complexity)]
fn part_scores(
    data: &Dataset,
    households: &[String],
    train: &[usize],
    test: &[usize],
    spec: &ModelSpec,
    folds: usize,
    seed: u64,
) -> Result<[Option<(f64, f64)>; 3], EvalError> {
    let cv = |rows: &[usize], label: &str| -> Result<Option<(f64, f64)>, EvalError> {
        let groups: Vec<&str> = rows.iter().map(|&i| households[i].as_str()).collect();
        match folds_for(distinct_count(&groups), folds) {
            Some(f) => {
                let s = cross_validate_grouped(spec, &data.subset(rows), &groups, f, derive(seed, label, 0))?;
                Ok(Some((s.mean, rows.len() as f64)))
            }
            None => Ok(None),
        }
    };
    let train_cv = cv(train, "train-cv")?;
    let test_cv = cv(test, "test-cv")?;
    let independent = if train.is_empty() || test.is_empty() {
        None
    } else {
        let model = fit(spec, &data.subset(train))?;
        let test_set = data.subset(test);
        Some((accuracy(&test_set.y, &model.predict(&test_set.x)?), test.len() as f64))
    };
    Ok([train_cv, test_cv, independent])
}

fn weighted(parts: &[[Option<(f64, f64)>; 3]], k: usize) -> f64 {
    let (num, den) = parts
        .iter()
        .filter_map(|p| p[k])
        .fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn one_iteration(
    data: &Dataset,
    households: &[String],
    clusters: Option<&[usize]>,
    spec: &ModelSpec,
    test_frac: f64,
    folds: usize,
    seed: u64,
) -> Result<(Scores, usize, usize), EvalError> {
    let (train, test) = split_households(households, test_frac, derive(seed, "households", 0));
    let hh = |rows: &[usize]| distinct_count(&rows.iter().map(|&i| households[i].as_str()).collect::<Vec<_>>());
    let (n_train_hh, n_test_hh) = (hh(&train), hh(&test));
    let parts = match clusters {
        None => vec![part_scores(data, households, &train, &test, spec, folds, seed)?],
        Some(cluster_of) => {
            let mut by: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
            for &i in &train {
                by.entry(cluster_of[i]).or_default().0.push(i);
            }
            for &i in &test {
                by.entry(cluster_of[i]).or_default().1.push(i);
            }
            by.values()
                .map(|(tr, te)| part_scores(data, households, tr, te, spec, folds, seed))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let scores = Scores {
        train_cv: weighted(&parts, 0),
        test_cv: weighted(&parts, 1),
        independent: weighted(&parts, 2),
    };
    Ok((scores, n_train_hh, n_test_hh))
}

/// Household-disjoint evaluation repeated over random splits for every
/// held-out fraction. With `clusters`, each score is computed inside every
/// cluster and averaged with row weights. Iteration seeds do not depend on
/// `clusters`, so the plain and clustered runs see the same splits.
pub fn run_cold_start(
    data: &Dataset,
    households: &[String],
    clusters: Option<&[usize]>,
    spec: &ModelSpec,
    params: &ColdStartParams,
) -> Result<ColdStartReport, EvalError> {
    assert_eq!(households.len(), data.len());
    let n_households = distinct_count(households);
    for &frac in &params.scenarios {
        let needed = (1.0 / frac).ceil() as usize;
        if !(frac > 0.0 && frac < 1.0) || n_households < needed {
            return Err(EvalError::InsufficientHouseholds {
                households: n_households,
                needed,
            });
        }
    }
    let tasks: Vec<(usize, usize)> = (0..params.scenarios.len())
        .flat_map(|s| (0..params.iterations).map(move |t| (s, t)))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(s, t)| {
            let frac = params.scenarios[s];
            let seed = derive(params.seed, "coldstart", (s * 1_000_003 + t) as u64);
            let (scores, train_households, test_households) =
                one_iteration(data, households, clusters, spec, frac, params.folds, seed)?;
            Ok(IterationResult {
                test_frac: frac,
                iteration: t,
                train_households,
                test_households,
                train_cv: scores.train_cv,
                test_cv: scores.test_cv,
                independent: scores.independent,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let scenarios = params
        .scenarios
        .iter()
        .map(|&frac| {
            let rows: Vec<&IterationResult> = results.iter().filter(|r| r.test_frac == frac).collect();
            let col = |f: fn(&IterationResult) -> f64| rows.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect::<Vec<_>>();
            ScenarioSummary {
                test_frac: frac,
                train_cv: MeanStd::of(&col(|r| r.train_cv)),
                test_cv: MeanStd::of(&col(|r| r.test_cv)),
                independent: MeanStd::of(&col(|r| r.independent)),
            }
        })
        .collect();
    Ok(ColdStartReport {
        clustered: clusters.is_some(),
        weighting: if clusters.is_some() { "rows" } else { "none" }.to_string(),
        scenarios,
        iterations: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Matrix;
    use rand::Rng;

    fn households_data(n_households: usize) -> (Dataset, Vec<String>, Vec<usize>) {
        let mut rng = crate::seed::rng(5);
        let (mut rows, mut y, mut hh, mut cl) = (vec![], vec![], vec![], vec![]);
        for h in 0..n_households {
            let g = h % 2;
            for _ in 0..12 {
                let x = f64::from(rng.random_range(0..3u8));
                rows.push(vec![x, rng.random::<f64>()]);
                y.push(if g == 0 { x as u8 } else { 2 - x as u8 });
                hh.push(format!("h{h:03}"));
                cl.push(g);
            }
        }
        let d = Dataset::new(Matrix::from_rows(&rows), y, vec!["x".into(), "z".into()], 9).unwrap();
        (d, hh, cl)
    }

    fn spec() -> ModelSpec {
        ModelSpec::RandomForest {
            n_trees: 5,
            max_depth: Some(4),
            bootstrap: true,
            seed: 1,
        }
    }

    #[test]
    fn report_shape_and_pairing() {
        let (d, hh, cl) = households_data(30);
        let params = ColdStartParams {
            iterations: 3,
            ..Default::default()
        };
        let plain = run_cold_start(&d, &hh, None, &spec(), &params).unwrap();
        assert_eq!(plain.scenarios.len(), 3);
        assert_eq!(plain.iterations.len(), 9);
        let clustered = run_cold_start(&d, &hh, Some(&cl), &spec(), &params).unwrap();
        for (a, b) in plain.iterations.iter().zip(&clustered.iterations) {
            assert_eq!((a.train_households, a.test_households), (b.train_households, b.test_households));
        }
        assert!(clustered.scenarios[0].independent.mean > plain.scenarios[0].independent.mean);
        assert_eq!(plain.iterations[0].test_households, 3);
    }

    #[test]
    fn too_few_households() {
        let (d, hh, _) = households_data(8);
        let err = run_cold_start(&d, &hh, None, &spec(), &ColdStartParams::default()).unwrap_err();
        assert_eq!(err, EvalError::InsufficientHouseholds { households: 8, needed: 10 });
    }
}
