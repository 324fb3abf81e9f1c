//! Additive feature attributions for tree ensembles and their aggregation
//! into global and per-family importance.
//!
//! Attributions are exact Shapley values of the margin (log-odds) under
//! path-dependent conditioning: a feature outside the coalition is
//! integrated out by following both children weighted by training cover.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureGroup;
use crate::gbm::{Node, Tree, TreeEnsemble};
use crate::metrics::Metric;
use crate::n2v::mix_seed;
use crate::par;

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d = depth as f64;
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one_fraction * w * (i as f64 + 1.0) / (d + 1.0);
        path[i].weight = zero_fraction * w * (d - i as f64) / (d + 1.0);
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let d = depth as f64;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * (d + 1.0) / ((i as f64 + 1.0) * one);
            next_one = tmp - path[i].weight * zero * (d - i as f64) / (d + 1.0);
        } else {
            path[i].weight = path[i].weight * (d + 1.0) / (zero * (d - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let d = depth as f64;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * (d + 1.0) / ((i as f64 + 1.0) * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * (d - i as f64) / (d + 1.0);
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((d - i as f64) / (d + 1.0));
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    row: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
    scale: f64,
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                let f = el.feature.expect("only the root element has no feature");
                phi[f] += w * (el.one_fraction - el.zero_fraction) * value * scale;
            }
        }
        Node::Split {
            feature: split,
            threshold,
            missing_left,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if Tree::route(*threshold, *missing_left, row[*split]) {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let hot_share = tree.nodes[hot].cover() / cover;
            let cold_share = tree.nodes[cold].cover() / cover;
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            recurse(
                tree,
                row,
                phi,
                hot,
                path.clone(),
                hot_share * incoming_zero,
                incoming_one,
                Some(*split),
                scale,
            );
            recurse(tree, row, phi, cold, path, cold_share * incoming_zero, 0.0, Some(*split), scale);
        }
    }
}

/// Cover-weighted mean output of a tree.
pub fn expected_value(tree: &Tree) -> f64 {
    fn go(t: &Tree, i: usize) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, .. } => *value,
            Node::Split {
                left, right, cover, ..
            } => (t.nodes[*left].cover() * go(t, *left) + t.nodes[*right].cover() * go(t, *right)) / cover,
        }
    }
    go(tree, 0)
}

/// Margin of the ensemble when no feature is known.
pub fn base_value(ensemble: &TreeEnsemble) -> f64 {
    ensemble.base_score + ensemble.shrinkage * ensemble.trees.iter().map(expected_value).sum::<f64>()
}

/// Shapley values of one sample; `base_value + Σ φ` equals the margin.
pub fn tree_shap(ensemble: &TreeEnsemble, row: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; ensemble.n_features];
    for tree in &ensemble.trees {
        recurse(tree, row, &mut phi, 0, Vec::new(), 1.0, 1.0, None, ensemble.shrinkage);
    }
    phi
}

/// Per-sample attributions over a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub feature_names: Vec<String>,
    pub base: Vec<f64>,
    /// One vector per sample.
    pub values: Vec<Vec<f64>>,
}

impl AttributionMatrix {
    /// Attributions for every row of a column-major matrix.
    pub fn compute(ensemble: &TreeEnsemble, feature_names: &[String], columns: &[&[f64]]) -> Result<Self> {
        if columns.len() != ensemble.n_features || feature_names.len() != ensemble.n_features {
            return Err(Error::Dimension("feature count does not match the model".into()));
        }
        let n = columns.first().map_or(0, |c| c.len());
        let idx: Vec<usize> = (0..n).collect();
        let values = par::map(&idx, |&i| {
            let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            tree_shap(ensemble, &row)
        });
        Ok(AttributionMatrix {
            feature_names: feature_names.to_vec(),
            base: vec![base_value(ensemble); n],
            values,
        })
    }

    /// Stacks attributions computed by different models over the same
    /// features (for example one per cross-validation fold).
    pub fn concat(parts: Vec<AttributionMatrix>) -> Result<Self> {
        let mut it = parts.into_iter();
        let mut out = it.next().ok_or_else(|| Error::EmptyInput("no attributions".into()))?;
        for p in it {
            if p.feature_names != out.feature_names {
                return Err(Error::Dimension("attribution feature lists differ".into()));
            }
            out.base.extend(p.base);
            out.values.extend(p.values);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub group: FeatureGroup,
    pub mean_abs_attr: f64,
    /// Percent of the total over all features.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Sorted by importance, largest first (ties by name).
    pub features: Vec<FeatureImportance>,
    /// Percent share of each family that has at least one feature.
    pub groups: BTreeMap<FeatureGroup, f64>,
}

impl ImportanceReport {
    pub fn top(&self, k: usize) -> &[FeatureImportance] {
        &self.features[..k.min(self.features.len())]
    }

    /// Combined percent share of the given families.
    pub fn share_of(&self, groups: &[FeatureGroup]) -> f64 {
        groups.iter().map(|g| self.groups.get(g).copied().unwrap_or(0.0)).sum()
    }

    /// `feature,group,mean_abs_attr,share`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "group", "mean_abs_attr", "share"])?;
        for f in &self.features {
            w.write_record([
                f.name.clone(),
                f.group.to_string(),
                format!("{:.9}", f.mean_abs_attr),
                format!("{:.6}", f.share),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<importance>", e))?;
        Ok(())
    }

    /// Nested `{group: {feature: share}}` for treemap plotting.
    pub fn treemap(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut map: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for f in &self.features {
            map.entry(f.group.to_string())
                .or_default()
                .insert(f.name.clone(), (f.share * 1e6).round() / 1e6);
        }
        map
    }
}

/// Mean |attribution| per feature and each family's share of the total.
pub fn global_importance(attrs: &AttributionMatrix, groups: &[FeatureGroup]) -> Result<ImportanceReport> {
    let k = attrs.feature_names.len();
    if groups.len() != k {
        return Err(Error::Dimension("one group per feature is required".into()));
    }
    let n = attrs.values.len().max(1) as f64;
    let mut sums = vec![0.0; k];
    for row in &attrs.values {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v.abs();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let total: f64 = means.iter().sum();
    let share = |m: f64| if total > 0.0 { 100.0 * m / total } else { 0.0 };
    let mut features: Vec<FeatureImportance> = (0..k)
        .map(|i| FeatureImportance {
            name: attrs.feature_names[i].clone(),
            group: groups[i],
            mean_abs_attr: means[i],
            share: share(means[i]),
        })
        .collect();
    features.sort_by(|a, b| {
        b.mean_abs_attr
            .total_cmp(&a.mean_abs_attr)
            .then_with(|| a.name.cmp(&b.name))
    });
    let mut group_shares = BTreeMap::new();
    for f in &features {
        *group_shares.entry(f.group).or_insert(0.0) += f.share;
    }
    Ok(ImportanceReport {
        features,
        groups: group_shares,
    })
}

/// Mean drop of `metric` when each column is shuffled, over `repeats`.
pub fn permutation_importance(
    ensemble: &TreeEnsemble,
    columns: &[&[f64]],
    y: &[bool],
    metric: Metric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if columns.len() != ensemble.n_features {
        return Err(Error::Dimension("feature count does not match the model".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let baseline = metric.compute(&ensemble.margin(columns), y);
    let idx: Vec<usize> = (0..columns.len()).collect();
    Ok(par::map(&idx, |&f| {
        let mut drop = 0.0;
        for r in 0..repeats {
            let mut shuffled = columns[f].to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, f as u64, r as u64]));
            shuffled.shuffle(&mut rng);
            let mut cols = columns.to_vec();
            cols[f] = &shuffled;
            drop += baseline - metric.compute(&ensemble.margin(&cols), y);
        }
        drop / repeats as f64
    }))
}
