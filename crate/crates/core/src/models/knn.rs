use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax_count, check_width, Dataset, LabelSpace, Matrix, ModelError};

/// Standardized training set. Features with zero spread are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub labels: LabelSpace,
    pub n_features: usize,
    /// Indices of the kept features.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Standardized training rows over the kept features, row-major.
    pub train: Vec<f64>,
    pub y: Vec<usize>,
}

pub fn knn_fit(data: &Dataset, k: usize) -> Result<KnnModel, ModelError> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(ModelError::KTooLarge { k, n });
    }
    let p = data.x.cols();
    let (mut kept, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..p {
        let m = (0..n).map(|i| data.x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (data.x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            kept.push(j);
            mean.push(m);
            std.push(var.sqrt());
        }
    }
    let mut model = KnnModel {
        k,
        labels: LabelSpace::fit(&data.y),
        n_features: p,
        kept,
        mean,
        std,
        train: Vec::new(),
        y: Vec::new(),
    };
    model.y = model.labels.encode(&data.y);
    model.train = (0..n).flat_map(|i| model.standardize(data.x.row(i))).collect();
    Ok(model)
}

impl KnnModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&j, (m, s))| (x[j] - m) / s)
            .collect()
    }

    fn vote(&self, q: &[f64]) -> usize {
        let d = self.kept.len();
        let n = self.y.len();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let r = &self.train[i * d..(i + 1) * d];
                (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i)
            })
            .collect();
        // Distance ties resolve toward the lower row index.
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < n {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let mut counts = vec![0usize; self.labels.len()];
        for &(_, i) in &dist[..self.k] {
            counts[self.y[i]] += 1;
        }
        argmax_count(&counts)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ModelError> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.labels.label(self.vote(&self.standardize(x.row(i)))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy;

    fn data(rows: &[[f64; 2]], y: &[u8]) -> Dataset {
        let m = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        Dataset::new(m, y.to_vec(), vec!["a".into(), "b".into()], 9).unwrap()
    }

    #[test]
    fn one_neighbor_recalls_training_rows() {
        let d = data(&[[0.0, 1.0], [1.0, 5.0], [2.0, 2.0], [3.0, 0.0]], &[3, 1, 4, 1]);
        let m = knn_fit(&d, 1).unwrap();
        assert_eq!(m.predict(&d.x).unwrap(), d.y);
        assert_eq!(accuracy(&d.y, &m.predict(&d.x).unwrap()), 1.0);
    }

    #[test]
    fn majority_and_tie_rules() {
        // Neighbors of the query at x=0 in order: rows 0,1,2 at distances 1,2,3.
        let d = data(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [10.0, 0.0]], &[2, 5, 2, 7]);
        let m = knn_fit(&d, 3).unwrap();
        let q = Matrix::new(1, 2, vec![0.0, 0.0]);
        assert_eq!(m.predict(&q).unwrap(), vec![2]);

        let d = data(&[[1.0, 0.0], [-1.0, 0.0], [5.0, 0.0]], &[3, 1, 1]);
        let m = knn_fit(&d, 2).unwrap();
        assert_eq!(m.predict(&q).unwrap(), vec![1]);
    }

    #[test]
    fn equal_distances_prefer_lower_rows() {
        let d = data(&[[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [4.0, 0.0]], &[6, 2, 2, 2]);
        let m = knn_fit(&d, 1).unwrap();
        assert_eq!(m.predict(&Matrix::new(1, 2, vec![0.0, 0.0])).unwrap(), vec![6]);
    }

    #[test]
    fn constant_feature_is_dropped() {
        let d = data(&[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]], &[0, 1, 2]);
        let m = knn_fit(&d, 1).unwrap();
        assert_eq!(m.kept, vec![0]);
        // The dropped feature is ignored at prediction time.
        assert_eq!(m.predict(&Matrix::new(1, 2, vec![2.0, 99.0])).unwrap(), vec![2]);
    }

    #[test]
    fn k_larger_than_train_is_rejected() {
        let d = data(&[[0.0, 1.0]], &[0]);
        assert_eq!(knn_fit(&d, 2).unwrap_err(), ModelError::KTooLarge { k: 2, n: 1 });
    }
}
