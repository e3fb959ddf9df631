//! Entity clustering on usage shape and location.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{CategoryCodes, Geo};
use crate::ingest::Room;
use crate::models::Matrix;
use crate::routine::{chord_distances, FrequencyProfile};
use crate::seed::derive;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("need at least {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k range is empty or contains 0")]
    BadRange,
}

/// Quantile with linear interpolation between order statistics of `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty slice");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const WINSOR_LOW: f64 = 0.15;
pub const WINSOR_HIGH: f64 = 0.85;

/// Clamp each value to the [q15, q85] range of the slice's own distribution.
pub fn winsorize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, WINSOR_LOW);
    let hi = quantile(&sorted, WINSOR_HIGH);
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterVector {
    pub household: String,
    pub room: Room,
    pub usage: Vec<f64>,
    pub country_onehot: Vec<f64>,
    pub room_onehot: [f64; 2],
}

impl ClusterVector {
    pub fn dim(&self) -> usize {
        self.usage.len() + self.country_onehot.len() + 2
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.usage);
        v.extend_from_slice(&self.country_onehot);
        v.extend_from_slice(&self.room_onehot);
        v
    }
}

pub fn build_cluster_vector(profile: &FrequencyProfile, geo: &Geo, codes: &CategoryCodes) -> ClusterVector {
    let mut country_onehot = vec![0.0; codes.country_cardinality()];
    country_onehot[codes.country(&geo.country) as usize] = 1.0;
    let mut room_onehot = [0.0; 2];
    room_onehot[profile.room.index()] = 1.0;
    ClusterVector {
        household: profile.household.clone(),
        room: profile.room,
        usage: winsorize(&profile.values),
        country_onehot,
        room_onehot,
    }
}

/// Stack cluster vectors into a point matrix.
pub fn vectors_matrix(vectors: &[ClusterVector]) -> Matrix {
    let cols = vectors.first().map_or(0, ClusterVector::dim);
    let data: Vec<f64> = vectors.iter().flat_map(ClusterVector::concat).collect();
    Matrix::new(vectors.len(), cols, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    pub iterations_run: usize,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lowest id.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut crate::seed::Rng) -> Vec<Vec<f64>> {
    use rand::Rng;
    let n = points.rows();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

struct Run {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    inertia: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn lloyd(points: &Matrix, k: usize, params: &KMeansParams, seed: u64) -> Run {
    let (n, d) = (points.rows(), points.cols());
    let mut rng = crate::seed::rng(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        for i in 0..n {
            let (j, dist) = nearest(&centroids, points.row(i));
            labels[i] = j;
            dists[i] = dist;
        }
        let inertia: f64 = dists.iter().sum();
        if let Some(&prev) = history.last() {
            assert!(
                inertia <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means inertia increased from {prev} to {inertia}"
            );
        }
        history.push(inertia);
        if converged || iterations == params.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        // Empty clusters move onto the points farthest from their centroid.
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                })
                .expect("n >= k");
            taken[far] = true;
            sums[j] = points.row(far).to_vec();
            counts[j] = 1;
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            let inv = 1.0 / counts[j] as f64;
            let new: Vec<f64> = sums[j].iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&new, &centroids[j]).sqrt());
            centroids[j] = new;
        }
        converged = shift < params.tol;
    }
    let inertia = *history.last().expect("non-empty");
    Run {
        centroids,
        labels,
        inertia,
        history,
        iterations,
    }
}

/// Best-of-`n_init` k-means++/Lloyd fit. Returns the model and the label of
/// every point.
pub fn kmeans_fit(points: &Matrix, k: usize, params: &KMeansParams) -> Result<(KMeansModel, Vec<usize>), ClusterError> {
    if k == 0 {
        return Err(ClusterError::BadRange);
    }
    if points.rows() < k {
        return Err(ClusterError::TooFewPoints { n: points.rows(), k });
    }
    let runs: Vec<Run> = (0..params.n_init.max(1))
        .into_par_iter()
        .map(|r| lloyd(points, k, params, derive(params.seed, "kmeans-restart", r as u64)))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("n_init >= 1");
    // The loop always ends on an assignment step, so these labels equal
    // `assign_cluster` on each point.
    let model = KMeansModel {
        k,
        centroids: best.centroids,
        inertia: best.inertia,
        seed: params.seed,
        iterations_run: best.iterations,
        inertia_history: best.history,
    };
    Ok((model, best.labels))
}

pub fn assign_cluster(model: &KMeansModel, v: &[f64]) -> Result<usize, ClusterError> {
    let expected = model.centroids.first().map_or(0, Vec::len);
    if v.len() != expected {
        return Err(ClusterError::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(nearest(&model.centroids, v).0)
}

/// Minimum normalized elbow distance for a k-curve to count as bent.
pub const DEFAULT_MIN_BEND: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct KSelection {
    pub k: usize,
    pub curve: Vec<(usize, f64)>,
    /// True when the curve had no clear elbow and the smallest k was taken.
    pub fallback: bool,
    pub model: KMeansModel,
    pub labels: Vec<usize>,
}

/// Fit every k in `ks` and pick k at the elbow of the inertia curve.
pub fn select_k(points: &Matrix, ks: &[usize], params: &KMeansParams, min_bend: f64) -> Result<KSelection, ClusterError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(ClusterError::BadRange);
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let fits = ks
        .par_iter()
        .map(|&k| {
            let p = KMeansParams {
                seed: derive(params.seed, "kmeans-k", k as u64),
                ..*params
            };
            kmeans_fit(points, k, &p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let curve: Vec<(usize, f64)> = ks.iter().zip(&fits).map(|(&k, f)| (k, f.0.inertia)).collect();
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let dist = chord_distances(&xs, &ys);
    let best = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (idx, fallback) = if ks.len() > 2 && best >= min_bend {
        (dist.iter().position(|&v| v >= best - 1e-12).expect("non-empty"), false)
    } else {
        if ks.len() > 1 {
            log::warn!("inertia curve has no clear elbow (max bend {best:.3}); using k = {}", ks[0]);
        }
        (0, ks.len() > 1)
    };
    let (model, labels) = fits.into_iter().nth(idx).expect("index in range");
    Ok(KSelection {
        k: ks[idx],
        curve,
        fallback,
        model,
        labels,
    })
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&m| c2(m)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub const CDF_POINTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub household: String,
    pub room: Room,
    pub cluster: usize,
    pub x: f64,
    pub cdf: f64,
}

/// Empirical CDF of a value set sampled at `CDF_POINTS` points evenly spaced
/// on [0, 1].
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    (0..CDF_POINTS)
        .map(|j| {
            let x = j as f64 / (CDF_POINTS - 1) as f64;
            let below = sorted.partition_point(|&v| v <= x);
            (x, below as f64 / n)
        })
        .collect()
}

/// CDF rows for every profile tagged with its cluster.
pub fn cdf_export(profiles: &[FrequencyProfile], clusters: &[usize]) -> Vec<CdfRow> {
    profiles
        .iter()
        .zip(clusters)
        .flat_map(|(p, &cluster)| {
            empirical_cdf(&p.values).into_iter().map(move |(x, cdf)| CdfRow {
                household: p.household.clone(),
                room: p.room,
                cluster,
                x,
                cdf,
            })
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between two sampled CDFs on the same grid.
pub fn ks_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p.1 - q.1).abs()).fold(0.0, f64::max)
}
