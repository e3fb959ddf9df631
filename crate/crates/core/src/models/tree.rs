//! CART trees on pre-binned features.
//!
//! Each feature is cut at the midpoints between its sorted distinct training
//! values (at most `MAX_BINS - 1` cuts). Rows are mapped once to the index of
//! their bin; split search then works on bin histograms. A row goes left when
//! its raw value is `<=` the split threshold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::seed::Rng;

pub const MAX_BINS: usize = 256;

/// Column-wise bin indices of a training matrix.
#[derive(Clone, Debug)]
pub struct Binned {
    n: usize,
    bins: Vec<Vec<u8>>,
    edges: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

fn cut_points(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mids: Vec<f64> = v
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            if m < w[1] {
                m
            } else {
                w[0]
            }
        })
        .collect();
    if mids.len() < MAX_BINS {
        return mids;
    }
    let keep = MAX_BINS - 1;
    let mut out: Vec<f64> = (0..keep).map(|i| mids[(i * mids.len()) / keep]).collect();
    out.dedup();
    out
}

impl Binned {
    pub fn new(x: &Matrix) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut bins = Vec::with_capacity(p);
        let mut edges = Vec::with_capacity(p);
        let mut values = Vec::with_capacity(p);
        for j in 0..p {
            let e = cut_points((0..n).map(|i| x.get(i, j)));
            bins.push(
                (0..n)
                    .map(|i| {
                        let v = x.get(i, j);
                        e.partition_point(|&c| c < v) as u8
                    })
                    .collect(),
            );
            edges.push(e);
            values.push((0..n).map(|i| x.get(i, j)).collect());
        }
        Self { n, bins, edges, values }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.bins.len()
    }

    fn n_bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Class index (classification) or leaf score (regression).
    pub value: f64,
    /// Weighted impurity decrease of the split, zero on leaves.
    pub decrease: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == LEAF {
                return node.value;
            }
            at = if x[node.feature as usize] <= node.threshold {
                node.left
            } else {
                node.right
            } as usize;
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        self.predict_row(x) as usize
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            let n = &t.nodes[at];
            if n.feature == LEAF {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }

    /// Per-feature impurity decrease summed over splits, relative to the
    /// root's total weight.
    pub fn impurity_decrease(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for n in &self.nodes {
            if n.feature != LEAF {
                out[n.feature as usize] += n.decrease;
            }
        }
        out
    }
}

pub(crate) enum Target<'a> {
    Class { y: &'a [usize], n_classes: usize },
    Regress { g: &'a [f64], h: &'a [f64] },
}

impl Target<'_> {
    fn stat_dim(&self) -> usize {
        match self {
            Target::Class { n_classes, .. } => *n_classes,
            Target::Regress { .. } => 4,
        }
    }

    #[inline]
    fn add(&self, i: usize, w: f64, stat: &mut [f64]) {
        match self {
            Target::Class { y, .. } => stat[y[i]] += w,
            Target::Regress { g, h } => {
                stat[0] += w;
                stat[1] += w * g[i];
                stat[2] += w * g[i] * g[i];
                stat[3] += w * h[i];
            }
        }
    }

    fn weight(&self, stat: &[f64]) -> f64 {
        match self {
            Target::Class { .. } => stat.iter().sum(),
            Target::Regress { .. } => stat[0],
        }
    }

    /// Impurity times weight: Gini for classes, squared error for regression.
    fn cost(&self, stat: &[f64]) -> f64 {
        match self {
            Target::Class { .. } => {
                let t: f64 = stat.iter().sum();
                if t <= 0.0 {
                    0.0
                } else {
                    t - stat.iter().map(|c| c * c).sum::<f64>() / t
                }
            }
            Target::Regress { .. } => {
                if stat[0] <= 0.0 {
                    0.0
                } else {
                    (stat[2] - stat[1] * stat[1] / stat[0]).max(0.0)
                }
            }
        }
    }

    fn is_pure(&self, stat: &[f64]) -> bool {
        match self {
            Target::Class { .. } => stat.iter().filter(|&&c| c > 0.0).count() <= 1,
            Target::Regress { .. } => self.cost(stat) <= 1e-12 * stat[2].max(1e-300),
        }
    }

    fn leaf_value(&self, stat: &[f64]) -> f64 {
        match self {
            Target::Class { .. } => {
                let mut best = 0;
                for (c, &v) in stat.iter().enumerate() {
                    if v > stat[best] {
                        best = c;
                    }
                }
                best as f64
            }
            Target::Regress { .. } => stat[1] / stat[3].max(1e-9),
        }
    }
}

struct Split {
    feature: usize,
    bin: usize,
    decrease: f64,
}

struct Builder<'a> {
    binned: &'a Binned,
    target: Target<'a>,
    weights: Option<&'a [f64]>,
    params: TreeParams,
    rng: Option<&'a mut Rng>,
    sd: usize,
}

impl Builder<'_> {
    #[inline]
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn node_stat(&self, idx: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; self.sd];
        for &i in idx {
            self.target.add(i, self.w(i), &mut s);
        }
        s
    }

    /// Best split of feature `f` as (bin, decrease), scanning candidate cuts
    /// in ascending order and keeping the first maximum.
    fn scan_feature(&self, f: usize, idx: &[usize], total: &[f64], parent_cost: f64) -> Option<(usize, f64)> {
        let sd = self.sd;
        let col = &self.binned.bins[f];
        let nb = self.binned.n_bins(f);
        let min_leaf = self.params.min_leaf.max(1) as f64;
        let total_w = self.target.weight(total);
        let mut best: Option<(usize, f64)> = None;
        let mut left = vec![0.0; sd];
        let mut right = vec![0.0; sd];
        let consider = |bin: usize, left: &[f64], right: &mut [f64], best: &mut Option<(usize, f64)>| {
            let wl = self.target.weight(left);
            let wr = total_w - wl;
            if wl < min_leaf || wr < min_leaf {
                return;
            }
            for k in 0..sd {
                right[k] = total[k] - left[k];
            }
            let dec = parent_cost - self.target.cost(left) - self.target.cost(right);
            if best.is_none_or(|(_, b)| dec > b) {
                *best = Some((bin, dec));
            }
        };
        if idx.len() * 2 < nb {
            let mut pairs: Vec<(u8, usize)> = idx.iter().map(|&i| (col[i], i)).collect();
            pairs.sort_unstable();
            for k in 0..pairs.len() {
                let (b, i) = pairs[k];
                self.target.add(i, self.w(i), &mut left);
                if k + 1 < pairs.len() && pairs[k + 1].0 != b {
                    consider(b as usize, &left, &mut right, &mut best);
                }
            }
        } else {
            let mut hist = vec![0.0; nb * sd];
            for &i in idx {
                let b = col[i] as usize;
                self.target.add(i, self.w(i), &mut hist[b * sd..(b + 1) * sd]);
            }
            for b in 0..nb - 1 {
                let h = &hist[b * sd..(b + 1) * sd];
                if h.iter().all(|&v| v == 0.0) && b > 0 {
                    // An empty bin repeats the previous cut.
                    continue;
                }
                for k in 0..sd {
                    left[k] += h[k];
                }
                if self.target.weight(&left) > 0.0 {
                    consider(b, &left, &mut right, &mut best);
                }
            }
        }
        best
    }

    fn find_split(&mut self, idx: &[usize], total: &[f64]) -> Option<Split> {
        let p = self.binned.cols();
        let parent_cost = self.target.cost(total);
        let mut order: Vec<usize> = (0..p).collect();
        let m = match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < p => {
                order.shuffle(rng);
                m.max(1)
            }
            _ => p,
        };
        let mut best: Option<Split> = None;
        for (rank, &f) in order.iter().enumerate() {
            // Past the sampled subset, keep looking only until a valid split exists.
            if rank >= m && best.is_some() {
                break;
            }
            if let Some((bin, dec)) = self.scan_feature(f, idx, total, parent_cost) {
                if best.as_ref().is_none_or(|b| dec > b.decrease) {
                    best = Some(Split {
                        feature: f,
                        bin,
                        decrease: dec,
                    });
                }
            }
        }
        best
    }

    /// Midpoint between the largest left and smallest right value among the
    /// node's weighted rows, so the cut sits in the middle of the node's gap.
    fn threshold(&self, f: usize, left: &[usize], right: &[usize], bin: usize) -> f64 {
        let v = &self.binned.values[f];
        let live = |rows: &'_ [usize]| rows.iter().copied().filter(|&i| self.w(i) > 0.0).map(|i| v[i]).collect::<Vec<_>>();
        let lo = live(left).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let hi = live(right).into_iter().fold(f64::INFINITY, f64::min);
        let m = 0.5 * (lo + hi);
        if lo.is_finite() && hi.is_finite() && lo <= m && m < hi {
            m
        } else {
            self.binned.edges[f][bin]
        }
    }

    fn build(mut self, rows: Vec<usize>) -> Tree {
        let root_w = {
            let s = self.node_stat(&rows);
            self.target.weight(&s).max(f64::MIN_POSITIVE)
        };
        let mut idx = rows;
        let mut nodes: Vec<Node> = vec![];
        // (node id, lo, hi, depth)
        let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
        nodes.push(leaf(0.0));
        while let Some((id, lo, hi, depth)) = stack.pop() {
            let stat = self.node_stat(&idx[lo..hi]);
            let w = self.target.weight(&stat);
            nodes[id].value = self.target.leaf_value(&stat);
            let stop = self.target.is_pure(&stat)
                || self.params.max_depth.is_some_and(|d| depth >= d)
                || w < 2.0 * self.params.min_leaf.max(1) as f64;
            if stop {
                continue;
            }
            let Some(split) = self.find_split(&idx[lo..hi], &stat) else {
                continue;
            };
            let col = &self.binned.bins[split.feature];
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx[lo..hi].iter().partition(|&&i| col[i] as usize <= split.bin);
            let mid = lo + l.len();
            idx[lo..mid].copy_from_slice(&l);
            idx[mid..hi].copy_from_slice(&r);
            let left_id = nodes.len();
            nodes.push(leaf(0.0));
            nodes.push(leaf(0.0));
            let threshold = self.threshold(split.feature, &idx[lo..mid], &idx[mid..hi], split.bin);
            let n = &mut nodes[id];
            n.feature = split.feature as u32;
            n.threshold = threshold;
            n.left = left_id as u32;
            n.right = left_id as u32 + 1;
            n.decrease = split.decrease.max(0.0) / root_w;
            stack.push((left_id + 1, mid, hi, depth + 1));
            stack.push((left_id, lo, mid, depth + 1));
        }
        Tree {
            n_features: self.binned.cols(),
            nodes,
        }
    }
}

fn leaf(value: f64) -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: LEAF,
        right: LEAF,
        value,
        decrease: 0.0,
    }
}

/// Gini classification tree over dense class indices `y`. Rows with zero
/// weight are left out.
pub fn tree_fit(
    binned: &Binned,
    y: &[usize],
    n_classes: usize,
    weights: Option<&[f64]>,
    params: TreeParams,
    rng: Option<&mut Rng>,
) -> Tree {
    let rows: Vec<usize> = (0..binned.rows())
        .filter(|&i| weights.is_none_or(|w| w[i] > 0.0))
        .collect();
    let target = Target::Class { y, n_classes };
    let sd = target.stat_dim();
    Builder {
        binned,
        target,
        weights,
        params,
        rng,
        sd,
    }
    .build(rows)
}

/// Squared-error regression tree on gradients `g` with Newton leaves
/// `sum(g) / sum(h)`.
pub(crate) fn regression_tree_fit(binned: &Binned, g: &[f64], h: &[f64], params: TreeParams) -> Tree {
    let target = Target::Regress { g, h };
    let sd = target.stat_dim();
    Builder {
        binned,
        target,
        weights: None,
        params,
        rng: None,
        sd,
    }
    .build((0..binned.rows()).collect())
}
