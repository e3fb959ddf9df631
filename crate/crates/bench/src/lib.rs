//! Deterministic inputs shared by the benchmarks.

use lumirec_core::seed::derive;
use lumirec_core::{Dataset, Matrix};

/// Uniform value in [0, 1) keyed by `(label, i)`.
pub fn unit(label: &str, i: u64) -> f64 {
    (derive(7, label, i) >> 11) as f64 / (1u64 << 53) as f64
}

/// A 1440-minute usage profile with one evening bump.
pub fn usage_curve() -> Vec<f64> {
    (0..1440u64)
        .map(|m| {
            let base = 0.05 * unit("curve", m);
            if (1080..1320).contains(&m) {
                base + 0.8
            } else {
                base
            }
        })
        .collect()
}

/// `n` points around `k` well-separated centres in `dim` dimensions.
pub fn blobs(n: usize, k: usize, dim: usize) -> Matrix {
    let data = (0..n * dim)
        .map(|j| {
            let centre = ((j / dim) % k) as f64 * 10.0;
            centre + unit("blob", j as u64)
        })
        .collect();
    Matrix::new(n, dim, data)
}

/// A labelled table whose label depends on the first two columns.
pub fn table(n: usize, cols: usize, classes: u8) -> Dataset {
    let x = Matrix::new(n, cols, (0..n * cols).map(|j| unit("table", j as u64)).collect());
    let y = (0..n)
        .map(|i| {
            let v = x.get(i, 0) + 0.5 * x.get(i, 1);
            ((v / 1.5 * classes as f64) as u8).min(classes - 1)
        })
        .collect();
    let names = (0..cols).map(|c| format!("f{c}")).collect();
    Dataset::new(x, y, names, classes).expect("valid table")
}
