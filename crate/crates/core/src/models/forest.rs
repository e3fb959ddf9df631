use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{tree_fit, Binned, Tree, TreeParams};
use super::{argmax_count, check_width, Dataset, LabelSpace, Matrix, ModelError};
use crate::seed::derived_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub labels: LabelSpace,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Random forest: bootstrap rows per tree, sqrt(p) candidate features per
/// split, majority vote.
pub fn rf_fit(data: &Dataset, n_trees: usize, max_depth: Option<usize>, bootstrap: bool, seed: u64) -> ForestModel {
    let labels = LabelSpace::fit(&data.y);
    let y = labels.encode(&data.y);
    let binned = Binned::new(&data.x);
    let n = data.len();
    let p = data.x.cols();
    let params = TreeParams {
        max_depth,
        min_leaf: 1,
        max_features: Some((p as f64).sqrt().ceil() as usize),
    };
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(seed, "forest-tree", t as u64);
            let weights = bootstrap.then(|| {
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
                w
            });
            tree_fit(&binned, &y, labels.len(), weights.as_deref(), params, Some(&mut rng))
        })
        .collect();
    ForestModel {
        labels,
        n_features: p,
        trees,
    }
}

impl ForestModel {
    /// Dense class index voted for each row.
    pub fn vote(&self, x: &[f64]) -> usize {
        let mut counts = vec![0usize; self.labels.len()];
        for t in &self.trees {
            counts[t.predict_class(x)] += 1;
        }
        argmax_count(&counts)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ModelError> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.labels.label(self.vote(x.row(i))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy;

    fn blobs(seed: u64) -> Dataset {
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..300 {
            let c = (i % 3) as u8;
            let base = [0.0, 3.0, 6.0][c as usize];
            rows.push(vec![base + rng.random::<f64>() * 2.0, rng.random::<f64>(), f64::from(c) * 0.5]);
            y.push(c * 2 + 1);
        }
        Dataset::new(Matrix::from_rows(&rows), y, vec!["a".into(), "b".into(), "c".into()], 9).unwrap()
    }

    #[test]
    fn single_unbootstrapped_tree_memorizes() {
        let d = blobs(1);
        let m = rf_fit(&d, 1, None, false, 3);
        assert_eq!(accuracy(&d.y, &m.predict(&d.x).unwrap()), 1.0);
    }

    #[test]
    fn same_seed_same_forest() {
        let d = blobs(2);
        assert_eq!(rf_fit(&d, 8, Some(4), true, 5), rf_fit(&d, 8, Some(4), true, 5));
    }

    #[test]
    fn vote_matches_brute_force_tally() {
        let d = blobs(3);
        let m = rf_fit(&d, 9, Some(2), true, 1);
        let pred = m.predict(&d.x).unwrap();
        for i in 0..d.len() {
            let mut tally = [0usize; 9];
            for t in &m.trees {
                tally[usize::from(m.labels.label(t.predict_class(d.x.row(i))))] += 1;
            }
            let max = *tally.iter().max().unwrap();
            let expect = tally.iter().position(|&c| c == max).unwrap() as u8;
            assert_eq!(pred[i], expect);
        }
    }

    #[test]
    fn predicts_original_label_ids() {
        let d = blobs(4);
        let m = rf_fit(&d, 5, None, true, 0);
        let pred = m.predict(&d.x).unwrap();
        assert!(pred.iter().all(|p| [1, 3, 5].contains(p)));
        assert!(m.predict(&Matrix::new(1, 2, vec![0.0, 0.0])).is_err());
    }
}
