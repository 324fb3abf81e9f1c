//! Gradient-boosted regression trees with a logistic link.
//!
//! Trees are grown depth-first on quantile-binned features with second-order
//! (Newton) leaf values. Missing values get their own histogram bin and each
//! split learns which side they go to.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logit, sigmoid};
use crate::n2v::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every tree output.
    pub learning_rate: f64,
    /// Minimum training rows per leaf.
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub max_bins: usize,
    /// Row fraction drawn without replacement for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 20,
            lambda: 1.0,
            max_bins: 64,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config("max_depth and min_leaf must be >= 1".into()));
        }
        if !(2..=254).contains(&self.max_bins) {
            return Err(Error::Config("max_bins must be in 2..=254".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and lambda >= 0".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
        /// Training rows that reached this node.
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Child reached by a value, with NaN following the learned direction.
    pub fn route(threshold: f64, missing_left: bool, x: f64) -> bool {
        if x.is_nan() {
            missing_left
        } else {
            x <= threshold
        }
    }

    pub fn predict(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                    ..
                } => {
                    i = if Tree::route(*threshold, *missing_left, value_of(*feature)) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// `P(default) = σ(base_score + shrinkage · Σ tree(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Mean training log-loss after each boosting round.
    pub train_loss: Vec<f64>,
}

impl TreeEnsemble {
    pub fn margin_row(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.shrinkage * self.trees.iter().map(|t| t.predict(|f| row[f])).sum::<f64>()
    }

    /// Log-odds for every row of a column-major matrix.
    pub fn margin(&self, columns: &[&[f64]]) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        (0..n)
            .map(|i| {
                self.base_score
                    + self.shrinkage
                        * self
                            .trees
                            .iter()
                            .map(|t| t.predict(|f| columns[f][i]))
                            .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, columns: &[&[f64]]) -> Vec<f64> {
        self.margin(columns).into_iter().map(sigmoid).collect()
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.n_features];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    used[*feature] = true;
                }
            }
        }
        used
    }
}

const MISSING: u8 = u8::MAX;

/// Quantile bins of one feature; `uppers[b]` is the largest training value
/// in bin `b`.
struct Binned {
    uppers: Vec<f64>,
    bins: Vec<u8>,
}

fn bin_feature(values: &[f64], max_bins: usize) -> Binned {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut uppers: Vec<f64> = Vec::new();
    if !sorted.is_empty() {
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() <= max_bins {
            uppers = distinct;
        } else {
            let n = sorted.len();
            for k in 1..=max_bins {
                let v = sorted[(k * n).div_ceil(max_bins) - 1];
                if uppers.last() != Some(&v) {
                    uppers.push(v);
                }
            }
        }
    }
    let bins = values
        .iter()
        .map(|&v| {
            if v.is_nan() {
                MISSING
            } else {
                uppers.partition_point(|&u| u < v).min(uppers.len() - 1) as u8
            }
        })
        .collect();
    Binned { uppers, bins }
}

#[derive(Clone, Copy, Default)]
struct Bucket {
    g: f64,
    h: f64,
    n: u32,
}

/// Per-feature histograms laid out back to back; each feature has its
/// value bins followed by one missing bin.
#[derive(Clone)]
struct Histogram(Vec<Bucket>);

struct Builder<'a> {
    features: &'a [Binned],
    offsets: Vec<usize>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    params: &'a GbmParams,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    bin: usize,
    missing_left: bool,
    gain: f64,
}

impl<'a> Builder<'a> {
    fn histogram(&self, rows: &[u32]) -> Histogram {
        let mut h = vec![Bucket::default(); *self.offsets.last().unwrap()];
        for (f, feat) in self.features.iter().enumerate() {
            let base = self.offsets[f];
            let missing_slot = self.offsets[f + 1] - 1;
            for &r in rows {
                let b = feat.bins[r as usize];
                let slot = if b == MISSING {
                    missing_slot
                } else {
                    base + b as usize
                };
                let bucket = &mut h[slot];
                bucket.g += self.grad[r as usize];
                bucket.h += self.hess[r as usize];
                bucket.n += 1;
            }
        }
        Histogram(h)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let d = h + self.params.lambda;
        if d > 0.0 {
            g * g / d
        } else {
            0.0
        }
    }

    fn best_split(&self, hist: &Histogram, g: f64, h: f64, n: u32) -> Option<SplitChoice> {
        let min_leaf = self.params.min_leaf as u32;
        let parent = self.score(g, h);
        let mut best: Option<SplitChoice> = None;
        for f in 0..self.features.len() {
            let slots = &hist.0[self.offsets[f]..self.offsets[f + 1]];
            let (values, missing) = slots.split_at(slots.len() - 1);
            let missing = missing[0];
            let mut left = Bucket::default();
            for (b, bucket) in values.iter().enumerate().take(values.len().saturating_sub(1)) {
                left.g += bucket.g;
                left.h += bucket.h;
                left.n += bucket.n;
                for missing_left in [false, true] {
                    let (lg, lh, ln) = if missing_left {
                        (left.g + missing.g, left.h + missing.h, left.n + missing.n)
                    } else {
                        (left.g, left.h, left.n)
                    };
                    let rn = n - ln;
                    if ln < min_leaf || rn < min_leaf {
                        continue;
                    }
                    let gain = self.score(lg, lh) + self.score(g - lg, h - lh) - parent;
                    if gain > best.as_ref().map_or(1e-12, |s| s.gain) {
                        best = Some(SplitChoice {
                            feature: f,
                            bin: b,
                            missing_left,
                            gain,
                        });
                    }
                    if missing.n == 0 {
                        break;
                    }
                }
            }
        }
        best
    }

    fn leaf(&mut self, g: f64, h: f64, n: usize) -> usize {
        let d = h + self.params.lambda;
        let value = if d > 0.0 { -g / d } else { 0.0 };
        self.nodes.push(Node::Leaf {
            value,
            cover: n as f64,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &mut [u32], hist: Histogram, depth: usize) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return self.leaf(g, h, n);
        }
        let Some(split) = self.best_split(&hist, g, h, n as u32) else {
            return self.leaf(g, h, n);
        };
        let bins = &self.features[split.feature].bins;
        let goes_left = |r: u32| {
            let b = bins[r as usize];
            if b == MISSING {
                split.missing_left
            } else {
                (b as usize) <= split.bin
            }
        };
        // stable partition keeps row order deterministic
        let mut left: Vec<u32> = Vec::with_capacity(n);
        let mut right: Vec<u32> = Vec::with_capacity(n);
        for &r in rows.iter() {
            if goes_left(r) {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        let n_left = left.len();
        rows[..n_left].copy_from_slice(&left);
        rows[n_left..].copy_from_slice(&right);
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let (small_hist, left_is_small) = if left_rows.len() <= right_rows.len() {
            (self.histogram(left_rows), true)
        } else {
            (self.histogram(right_rows), false)
        };
        let mut large_hist = hist;
        for (a, b) in large_hist.0.iter_mut().zip(&small_hist.0) {
            a.g -= b.g;
            a.h -= b.h;
            a.n -= b.n;
        }
        let (left_hist, right_hist) = if left_is_small {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        let l = self.grow(left_rows, left_hist, depth + 1);
        let r = self.grow(right_rows, right_hist, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: self.features[split.feature].uppers[split.bin],
            missing_left: split.missing_left,
            left: l,
            right: r,
            cover: n as f64,
        };
        idx
    }
}

fn log_loss(margins: &[f64], y: &[bool]) -> f64 {
    let s: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            if t {
                -crate::linalg::log_sigmoid(m)
            } else {
                -crate::linalg::log_sigmoid(-m)
            }
        })
        .sum();
    s / margins.len().max(1) as f64
}

/// Fits a boosted ensemble to a column-major feature matrix.
pub fn train_gbm(columns: &[&[f64]], y: &[bool], params: &GbmParams) -> Result<TreeEnsemble> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("feature columns and target differ in length".into()));
    }
    let positives = y.iter().filter(|&&t| t).count();
    let prevalence = positives as f64 / n as f64;
    if positives == 0 || positives == n {
        log::warn!("training target has a single class; returning a constant model");
        return Ok(TreeEnsemble {
            base_score: logit(prevalence.clamp(1e-6, 1.0 - 1e-6)),
            shrinkage: params.learning_rate,
            trees: Vec::new(),
            n_features: columns.len(),
            train_loss: Vec::new(),
        });
    }
    let base_score = logit(prevalence);
    let features: Vec<Binned> = columns.iter().map(|c| bin_feature(c, params.max_bins)).collect();
    let mut offsets = Vec::with_capacity(features.len() + 1);
    offsets.push(0);
    for f in &features {
        offsets.push(offsets.last().unwrap() + f.uppers.len() + 1);
    }
    let mut builder = Builder {
        features: &features,
        offsets,
        grad: vec![0.0; n],
        hess: vec![0.0; n],
        params,
        nodes: Vec::new(),
    };
    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut train_loss = Vec::with_capacity(params.n_trees);
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    for t in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            builder.grad[i] = p - if y[i] { 1.0 } else { 0.0 };
            builder.hess[i] = p * (1.0 - p);
        }
        let mut rows: Vec<u32> = if take < n {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(mix_seed(&[
                params.seed,
                t as u64,
            ]));
            let mut r: Vec<u32> = sample(&mut rng, n, take).into_iter().map(|i| i as u32).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        builder.nodes = Vec::new();
        let hist = builder.histogram(&rows);
        builder.grow(&mut rows, hist, 0);
        let tree = Tree {
            nodes: std::mem::take(&mut builder.nodes),
        };
        for (i, m) in margins.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict(|f| columns[f][i]);
        }
        train_loss.push(log_loss(&margins, y));
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        base_score,
        shrinkage: params.learning_rate,
        trees,
        n_features: columns.len(),
        train_loss,
    })
}
