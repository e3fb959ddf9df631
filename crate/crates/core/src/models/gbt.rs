use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{regression_tree_fit, Binned, Tree, TreeParams};
use super::{check_width, Dataset, LabelSpace, Matrix, ModelError};

/// Halvings tried before a boosting round is given zero weight.
const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtRound {
    /// Applied shrinkage: the learning rate, halved until the training loss
    /// stops increasing.
    pub step: f64,
    /// One tree per class in label-space order.
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub labels: LabelSpace,
    pub n_features: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: Vec<f64>,
    pub rounds: Vec<GbtRound>,
    /// Training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

fn row_loss(scores: &[f64], y: usize) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    lse - scores[y]
}

/// Mean cross-entropy of row-major scores (`n x k`) against dense labels.
fn mean_loss(scores: &[f64], k: usize, y: &[usize]) -> f64 {
    let total: f64 = y.iter().enumerate().map(|(i, &c)| row_loss(&scores[i * k..(i + 1) * k], c)).sum();
    total / y.len() as f64
}

/// Softmax gradient boosting with one regression tree per class and round.
pub fn gbt_fit(data: &Dataset, n_trees: usize, max_depth: Option<usize>, learning_rate: f64, seed: u64) -> GbtModel {
    let labels = LabelSpace::fit(&data.y);
    let y = labels.encode(&data.y);
    let (n, k) = (data.len(), labels.len());
    let mut counts = vec![0usize; k];
    for &c in &y {
        counts[c] += 1;
    }
    let init: Vec<f64> = counts
        .iter()
        .map(|&c| ((c as f64 + 1.0) / (n + k) as f64).ln())
        .collect();
    let mut model = GbtModel {
        labels,
        n_features: data.x.cols(),
        learning_rate,
        seed,
        init,
        rounds: Vec::new(),
        train_loss: Vec::new(),
    };
    let mut scores: Vec<f64> = (0..n).flat_map(|_| model.init.iter().copied()).collect();
    let mut loss = mean_loss(&scores, k, &y);
    model.train_loss.push(loss);
    if k < 2 {
        return model;
    }
    let binned = Binned::new(&data.x);
    let params = TreeParams {
        max_depth,
        min_leaf: 1,
        max_features: None,
    };
    let mut prob = vec![0.0; n * k];
    for _ in 0..n_trees {
        for i in 0..n {
            softmax_into(&scores[i * k..(i + 1) * k], &mut prob[i * k..(i + 1) * k]);
        }
        let trees: Vec<Tree> = (0..k)
            .into_par_iter()
            .map(|c| {
                let g: Vec<f64> = (0..n).map(|i| f64::from(u8::from(y[i] == c)) - prob[i * k + c]).collect();
                let h: Vec<f64> = (0..n).map(|i| prob[i * k + c] * (1.0 - prob[i * k + c])).collect();
                regression_tree_fit(&binned, &g, &h, params)
            })
            .collect();
        let update: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let row = data.x.row(i);
                trees.iter().map(move |t| t.predict_row(row))
            })
            .collect();
        let mut step = learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            if step == 0.0 {
                break;
            }
            let trial: Vec<f64> = scores.iter().zip(&update).map(|(s, u)| s + step * u).collect();
            let trial_loss = mean_loss(&trial, k, &y);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_loss)) => {
                scores = trial;
                loss = trial_loss;
            }
            None => step = 0.0,
        }
        model.train_loss.push(loss);
        model.rounds.push(GbtRound { step, trees });
    }
    model
}

impl GbtModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.init.clone();
        for round in &self.rounds {
            if round.step == 0.0 {
                continue;
            }
            for (v, t) in s.iter_mut().zip(&round.trees) {
                *v += round.step * t.predict_row(x);
            }
        }
        s
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ModelError> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| {
                let s = self.scores(x.row(i));
                let mut best = 0;
                for c in 1..s.len() {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                self.labels.label(best)
            })
            .collect())
    }
}

/// Mean cross-entropy of the model on `(x, y)`. Labels the model never saw
/// score as probability 1e-15.
pub fn log_loss(model: &GbtModel, x: &Matrix, y: &[u8]) -> f64 {
    let total: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let s = model.scores(x.row(i));
            match model.labels.index(label) {
                Some(c) => row_loss(&s, c),
                None => -(1e-15f64).ln(),
            }
        })
        .sum();
    total / y.len().max(1) as f64
}
