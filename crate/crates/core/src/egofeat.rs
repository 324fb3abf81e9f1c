//! Ego-network aggregation features (group D): mean and standard deviation
//! of neighbor attributes, optionally weighted by a neighbor statistic, over
//! all edges, bridge edges only, or non-bridge edges only.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureFrame, FeatureGroup, Provenance};
use crate::graph::{Graph, NodeAttributeTable, TemporalNetwork};
use crate::netstats::{NetworkStats, STAT_NAMES};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeSubset {
    Full,
    NotBridge,
    IsBridge,
}

impl EdgeSubset {
    pub const ALL: [EdgeSubset; 3] = [EdgeSubset::Full, EdgeSubset::NotBridge, EdgeSubset::IsBridge];

    pub fn label(self) -> &'static str {
        match self {
            EdgeSubset::Full => "Full",
            EdgeSubset::NotBridge => "NotBridge",
            EdgeSubset::IsBridge => "IsBridge",
        }
    }

    fn admits(self, is_bridge: bool) -> bool {
        match self {
            EdgeSubset::Full => true,
            EdgeSubset::NotBridge => !is_bridge,
            EdgeSubset::IsBridge => is_bridge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggregation {
    Mean,
    Std,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::Mean => "MEAN",
            Aggregation::Std => "STD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EgoAggregationSpec {
    pub attribute: String,
    pub edge_subset: EdgeSubset,
    pub aggregation: Aggregation,
    pub weight_by: Option<String>,
}

impl EgoAggregationSpec {
    /// `<Network>Ego<Edges>_NET_<AGG>_<ATT>[_Wby_<Feature>]`
    pub fn column_name(&self, network: &str) -> String {
        let mut s = format!(
            "{network}Ego{}_NET_{}_{}",
            self.edge_subset.label(),
            self.aggregation.label(),
            self.attribute
        );
        if let Some(w) = &self.weight_by {
            s.push_str("_Wby_");
            s.push_str(w);
        }
        s
    }
}

/// `<Network>Ego<Edges>_NET_HasNeighbors`
pub fn has_neighbors_column(network: &str, subset: EdgeSubset) -> String {
    format!("{network}Ego{}_NET_HasNeighbors", subset.label())
}

/// Edge subsets × attributes × {MEAN, STD} × {unweighted, each weight}.
pub fn default_spec_grid(attributes: &[String], weights: &[String]) -> Vec<EgoAggregationSpec> {
    let mut out = Vec::new();
    for subset in EdgeSubset::ALL {
        for attribute in attributes {
            for aggregation in [Aggregation::Mean, Aggregation::Std] {
                for weight_by in std::iter::once(None).chain(weights.iter().cloned().map(Some)) {
                    out.push(EgoAggregationSpec {
                        attribute: attribute.clone(),
                        edge_subset: subset,
                        aggregation,
                        weight_by,
                    });
                }
            }
        }
    }
    out
}

/// Per-node values of named attributes for one snapshot, indexed by local
/// node. NaN marks a missing value.
#[derive(Debug, Clone, Default)]
pub struct NodeValues {
    columns: HashMap<String, Vec<f64>>,
}

impl NodeValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.columns.insert(name.into(), values);
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }
}

/// Weighted mean and population SD over the admitted neighbors of `v`.
/// Neighbors with a NaN value or NaN weight are skipped.
fn aggregate(
    g: &Graph,
    bridges: &[bool],
    v: usize,
    subset: EdgeSubset,
    x: &[f64],
    w: Option<&[f64]>,
) -> (f64, f64) {
    let mut sw = 0.0;
    let mut swx = 0.0;
    let admitted = || {
        g.neighbors(v).iter().filter_map(|nb| {
            if !subset.admits(bridges[nb.edge]) {
                return None;
            }
            let xi = x[nb.node];
            let wi = w.map_or(1.0, |w| w[nb.node]);
            (!xi.is_nan() && !wi.is_nan()).then_some((xi, wi))
        })
    };
    for (xi, wi) in admitted() {
        sw += wi;
        swx += wi * xi;
    }
    if !(sw > 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let mean = swx / sw;
    let var = admitted().map(|(xi, wi)| wi * (xi - mean).powi(2)).sum::<f64>() / sw;
    (mean, var.sqrt())
}

/// Computes every spec for the requested local nodes. Returns one column per
/// spec, in spec order, aligned with `nodes`.
pub fn egonet_features(
    g: &Graph,
    bridges: &[bool],
    values: &NodeValues,
    specs: &[EgoAggregationSpec],
    nodes: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if bridges.len() != g.edge_count() {
        return Err(Error::Dimension(format!(
            "{} bridge flags for {} edges",
            bridges.len(),
            g.edge_count()
        )));
    }
    // validate names and weights up front
    for s in specs {
        values.get(&s.attribute)?;
        if let Some(wname) = &s.weight_by {
            let w = values.get(wname)?;
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::Config(format!(
                    "weight attribute `{wname}` has negative values"
                )));
            }
        }
    }
    // MEAN and STD of the same (attribute, subset, weight) share one pass
    let mut groups: BTreeMap<(&str, EdgeSubset, Option<&str>), Vec<(usize, Aggregation)>> =
        BTreeMap::new();
    for (i, s) in specs.iter().enumerate() {
        groups
            .entry((s.attribute.as_str(), s.edge_subset, s.weight_by.as_deref()))
            .or_default()
            .push((i, s.aggregation));
    }
    let mut out = vec![Vec::new(); specs.len()];
    for ((attribute, subset, weight_by), members) in groups {
        let x = values.get(attribute)?;
        let w = weight_by.map(|name| values.get(name)).transpose()?;
        let stats: Vec<(f64, f64)> = nodes
            .iter()
            .map(|&v| aggregate(g, bridges, v, subset, x, w))
            .collect();
        for (i, agg) in members {
            out[i] = stats
                .iter()
                .map(|&(m, s)| match agg {
                    Aggregation::Mean => m,
                    Aggregation::Std => s,
                })
                .collect();
        }
    }
    Ok(out)
}

/// Whether `v` has at least one neighbor through an edge of `subset`.
pub fn has_neighbors(g: &Graph, bridges: &[bool], v: usize, subset: EdgeSubset) -> bool {
    g.neighbors(v).iter().any(|nb| subset.admits(bridges[nb.edge]))
}

/// Group-D frame for the requested (entity, period) rows.
///
/// Aggregated values come from `attrs` at the row's period plus the node
/// statistics of the snapshot in force, which `stats` must cover. Entities
/// absent from the snapshot get NaN aggregates and 0 indicators.
pub fn egonet_frame(
    tn: &TemporalNetwork,
    network: &str,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
    specs: &[EgoAggregationSpec],
    stats: &NetworkStats,
) -> Result<FeatureFrame> {
    let mut by_period: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, (_, p)) in rows.iter().enumerate() {
        by_period.entry(*p).or_default().push(i);
    }
    let periods: Vec<i64> = by_period.keys().copied().collect();

    let per_period: Vec<Result<(Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)>> =
        par::map(&periods, |&period| {
            let row_ids = &by_period[&period];
            let n_specs = specs.len();
            let Some((idx, stats)) = stats.at(tn, period) else {
                let missing = vec![vec![f64::NAN; row_ids.len()]; n_specs];
                let zeros = vec![vec![0.0; row_ids.len()]; EdgeSubset::ALL.len()];
                return Ok((row_ids.clone(), missing, zeros));
            };
            let g = &tn.snapshots()[idx];
            let mut values = NodeValues::new();
            let attr_rows: Vec<Option<usize>> = g
                .entities()
                .iter()
                .map(|&e| attrs.row_index(tn.entity_name(e), period))
                .collect();
            for (j, name) in attrs.names().iter().enumerate() {
                let col = attr_rows
                    .iter()
                    .map(|r| r.map_or(f64::NAN, |i| attrs.row(i)[j]))
                    .collect();
                values.insert(name.clone(), col);
            }
            for stat in STAT_NAMES.iter().chain(["WDegree"].iter()) {
                values.insert(*stat, stats.stat(stat).expect("stat").to_vec());
            }
            let local: Vec<Option<usize>> = row_ids
                .iter()
                .map(|&r| tn.entity_index(&rows[r].0).and_then(|e| g.local_index(e)))
                .collect();
            let present: Vec<usize> = local.iter().flatten().copied().collect();
            let computed = egonet_features(g, &stats.bridges, &values, specs, &present)?;
            let mut cols = vec![vec![f64::NAN; row_ids.len()]; n_specs];
            let mut indicators = vec![vec![0.0; row_ids.len()]; EdgeSubset::ALL.len()];
            let mut k = 0;
            for (slot, l) in local.iter().enumerate() {
                if let Some(v) = *l {
                    for (c, col) in cols.iter_mut().enumerate() {
                        col[slot] = computed[c][k];
                    }
                    for (s, subset) in EdgeSubset::ALL.into_iter().enumerate() {
                        if has_neighbors(g, &stats.bridges, v, subset) {
                            indicators[s][slot] = 1.0;
                        }
                    }
                    k += 1;
                }
            }
            Ok((row_ids.clone(), cols, indicators))
        });

    let mut columns = vec![vec![f64::NAN; rows.len()]; specs.len()];
    let mut indicator_cols = vec![vec![0.0; rows.len()]; EdgeSubset::ALL.len()];
    for res in per_period {
        let (row_ids, cols, inds) = res?;
        for (c, col) in cols.into_iter().enumerate() {
            for (slot, &r) in row_ids.iter().enumerate() {
                columns[c][r] = col[slot];
            }
        }
        for (s, col) in inds.into_iter().enumerate() {
            for (slot, &r) in row_ids.iter().enumerate() {
                indicator_cols[s][r] = col[slot];
            }
        }
    }
    let mut frame = FeatureFrame::new(rows.to_vec());
    for (subset, values) in EdgeSubset::ALL.into_iter().zip(indicator_cols) {
        frame.push_column(
            &has_neighbors_column(network, subset),
            FeatureGroup::D,
            Provenance::SamePeriod,
            values,
        )?;
    }
    for (spec, values) in specs.iter().zip(columns) {
        frame.push_column(
            &spec.column_name(network),
            FeatureGroup::D,
            Provenance::SamePeriod,
            values,
        )?;
    }
    Ok(frame)
}
