use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::seed::rng;

/// Uniform row split; `round(test_frac * n)` rows go to the test side. Both
/// sides come back in ascending row order.
pub fn split_rows(n: usize, test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    let n_test = ((test_frac.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn distinct<S: AsRef<str>>(groups: &[S]) -> Vec<&str> {
    groups
        .iter()
        .map(AsRef::as_ref)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Household-level split of row indices: `round(test_frac * H)` households
/// and all their rows go to the test side.
pub fn split_households<S: AsRef<str>>(households: &[S], test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut hh = distinct(households);
    hh.shuffle(&mut rng(seed));
    let n_test = ((test_frac.clamp(0.0, 1.0) * hh.len() as f64).round() as usize).min(hh.len());
    let test: BTreeSet<&str> = hh[..n_test].iter().copied().collect();
    (0..households.len()).partition(|&i| !test.contains(households[i].as_ref()))
}

/// Fold id per row with every group kept inside one fold.
pub fn group_folds<S: AsRef<str>>(groups: &[S], folds: usize, seed: u64) -> Vec<usize> {
    let mut g = distinct(groups);
    g.shuffle(&mut rng(seed));
    let fold_of: std::collections::BTreeMap<&str, usize> = g.iter().enumerate().map(|(k, &name)| (name, k % folds)).collect();
    groups.iter().map(|s| fold_of[s.as_ref()]).collect()
}

pub fn distinct_count<S: AsRef<str>>(groups: &[S]) -> usize {
    distinct(groups).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_split_sizes() {
        let (train, test) = split_rows(100, 0.1, 3);
        assert_eq!(test.len(), 10);
        assert_eq!(train.len(), 90);
        let mut all = [train.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_rows(100, 0.1, 3), (train, test));
        assert!(split_rows(7, 0.0, 1).1.is_empty());
    }

    #[test]
    fn household_split_keeps_households_together() {
        let rows: Vec<String> = (0..50).map(|i| format!("h{}", i % 10)).collect();
        let (train, test) = split_households(&rows, 0.4, 9);
        let tr: BTreeSet<&str> = train.iter().map(|&i| rows[i].as_str()).collect();
        let te: BTreeSet<&str> = test.iter().map(|&i| rows[i].as_str()).collect();
        assert_eq!(te.len(), 4);
        assert!(tr.is_disjoint(&te));
        assert_eq!(test.len(), 20);
    }

    #[test]
    fn group_folds_respect_groups() {
        let rows: Vec<String> = (0..40).map(|i| format!("h{}", i % 8)).collect();
        let f = group_folds(&rows, 4, 2);
        for i in 0..40 {
            for j in 0..40 {
                if rows[i] == rows[j] {
                    assert_eq!(f[i], f[j]);
                }
            }
        }
        for k in 0..4 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 10);
        }
    }
}
