//! Per-node centrality statistics (feature group C).

use serde::{Deserialize, Serialize};

use crate::frame::{FeatureFrame, FeatureGroup, Provenance};
use crate::graph::{Graph, TemporalNetwork};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Transition probabilities proportional to edge weights.
    pub weighted: bool,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
            weighted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeScores {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration PageRank. Dangling mass is spread uniformly, so every
/// score is at least `(1 - damping) / N`.
pub fn pagerank(g: &Graph, cfg: &PageRankConfig) -> IterativeScores {
    let n = g.node_count();
    if n == 0 {
        return IterativeScores {
            scores: Vec::new(),
            iterations: 0,
            converged: true,
        };
    }
    let strength: Vec<f64> = (0..n)
        .map(|v| {
            if cfg.weighted {
                g.weighted_degree(v)
            } else {
                g.degree(v) as f64
            }
        })
        .collect();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n)
            .filter(|&v| strength[v] == 0.0)
            .map(|v| rank[v])
            .sum();
        let teleport = (1.0 - cfg.damping) / nf + cfg.damping * dangling / nf;
        for v in 0..n {
            let inflow: f64 = g
                .neighbors(v)
                .iter()
                .map(|nb| {
                    let w = if cfg.weighted { nb.weight } else { 1.0 };
                    rank[nb.node] * w / strength[nb.node]
                })
                .sum();
            next[v] = teleport + cfg.damping * inflow;
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("pagerank stopped after {iterations} iterations without converging");
    }
    IterativeScores {
        scores: rank,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitsScores {
    pub authority: Vec<f64>,
    pub hub: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// HITS on the symmetric weighted adjacency. Both vectors are L2-normalized;
/// isolated nodes score 0.
pub fn hits(g: &Graph, tol: f64, max_iter: usize) -> HitsScores {
    let n = g.node_count();
    let spmv = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|v| g.neighbors(v).iter().map(|nb| nb.weight * x[nb.node]).sum())
            .collect()
    };
    let normalize = |x: &mut Vec<f64>| {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
    };
    let mut hub = vec![if n > 0 { 1.0 / (n as f64).sqrt() } else { 0.0 }; n];
    let mut auth = spmv(&hub);
    normalize(&mut auth);
    let mut iterations = 0;
    let mut converged = n == 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut new_hub = spmv(&auth);
        normalize(&mut new_hub);
        let mut new_auth = spmv(&new_hub);
        normalize(&mut new_auth);
        let change: f64 = new_auth
            .iter()
            .zip(&auth)
            .chain(new_hub.iter().zip(&hub))
            .map(|(a, b)| (a - b).abs())
            .sum();
        auth = new_auth;
        hub = new_hub;
        converged = change < tol;
    }
    HitsScores {
        authority: auth,
        hub,
        iterations,
        converged,
    }
}

/// Number of triangles each node participates in.
pub fn triads(g: &Graph) -> Vec<u64> {
    let n = g.node_count();
    let mut counts = vec![0u64; n];
    for u in 0..n {
        let nu = g.neighbors(u);
        for a in nu.iter().filter(|a| a.node > u) {
            let v = a.node;
            // merge-intersect sorted neighbor lists, counting w > v
            let nv = g.neighbors(v);
            let (mut i, mut j) = (0, 0);
            while i < nu.len() && j < nv.len() {
                let (x, y) = (nu[i].node, nv[j].node);
                if x < y {
                    i += 1;
                } else if y < x {
                    j += 1;
                } else {
                    if x > v {
                        counts[u] += 1;
                        counts[v] += 1;
                        counts[x] += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    counts
}

/// DFS discovery/low-link pass shared by articulation points and bridges.
struct LowLink {
    disc: Vec<usize>,
    low: Vec<usize>,
    parent_edge: Vec<Option<usize>>,
    articulation: Vec<bool>,
    bridge: Vec<bool>,
}

fn low_link(g: &Graph) -> LowLink {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut ll = LowLink {
        disc: vec![UNSEEN; n],
        low: vec![0; n],
        parent_edge: vec![None; n],
        articulation: vec![false; n],
        bridge: vec![false; g.edge_count()],
    };
    let mut time = 0;
    // (node, next neighbor slot)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if ll.disc[root] != UNSEEN {
            continue;
        }
        ll.disc[root] = time;
        ll.low[root] = time;
        time += 1;
        let mut root_children = 0;
        stack.push((root, 0));
        while let Some(top) = stack.last_mut() {
            let (v, slot) = *top;
            let nbs = g.neighbors(v);
            if slot < nbs.len() {
                let nb = nbs[slot];
                top.1 += 1;
                if Some(nb.edge) == ll.parent_edge[v] {
                    continue;
                }
                if ll.disc[nb.node] == UNSEEN {
                    ll.parent_edge[nb.node] = Some(nb.edge);
                    ll.disc[nb.node] = time;
                    ll.low[nb.node] = time;
                    time += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((nb.node, 0));
                } else {
                    ll.low[v] = ll.low[v].min(ll.disc[nb.node]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _)) = stack.last() {
                    ll.low[p] = ll.low[p].min(ll.low[v]);
                    if ll.low[v] > ll.disc[p] {
                        ll.bridge[ll.parent_edge[v].expect("tree edge")] = true;
                    }
                    if p != root && ll.low[v] >= ll.disc[p] {
                        ll.articulation[p] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            ll.articulation[root] = true;
        }
    }
    ll
}

/// Nodes whose removal increases the number of connected components.
pub fn articulation_points(g: &Graph) -> Vec<bool> {
    low_link(g).articulation
}

/// Per entry of [`Graph::edges`]: whether removing the edge disconnects
/// its endpoints.
pub fn bridges(g: &Graph) -> Vec<bool> {
    low_link(g).bridge
}

/// All per-node statistics of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub degree: Vec<f64>,
    pub weighted_degree: Vec<f64>,
    pub degree_centrality: Vec<f64>,
    pub triads: Vec<f64>,
    pub pagerank: Vec<f64>,
    pub hits_auth: Vec<f64>,
    pub hits_hub: Vec<f64>,
    pub articulation_point: Vec<f64>,
    pub bridges: Vec<bool>,
}

/// Statistic identifiers, in column order.
pub const STAT_NAMES: [&str; 7] = [
    "Degree",
    "DegreeCentr",
    "Triads",
    "PageRank",
    "ArtPoint",
    "Hits_Auth",
    "Hits_Hub",
];

/// Statistics usable as non-negative aggregation weights.
pub const WEIGHT_STATS: [&str; 5] = ["DegreeCentr", "Triads", "PageRank", "Hits_Auth", "Hits_Hub"];

impl NodeStats {
    pub fn compute(g: &Graph, pr: &PageRankConfig) -> NodeStats {
        let n = g.node_count();
        let degree: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
        let degree_centrality = degree
            .iter()
            .map(|&d| if n > 1 { d / (n as f64 - 1.0) } else { 0.0 })
            .collect();
        let h = hits(g, pr.tol, pr.max_iter);
        let ll = low_link(g);
        NodeStats {
            weighted_degree: (0..n).map(|v| g.weighted_degree(v)).collect(),
            degree_centrality,
            triads: triads(g).into_iter().map(|t| t as f64).collect(),
            pagerank: pagerank(g, pr).scores,
            hits_auth: h.authority,
            hits_hub: h.hub,
            articulation_point: ll
                .articulation
                .iter()
                .map(|&a| if a { 1.0 } else { 0.0 })
                .collect(),
            bridges: ll.bridge,
            degree,
        }
    }

    /// Column for a statistic identifier from [`STAT_NAMES`] (or `WDegree`).
    pub fn stat(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "Degree" => &self.degree,
            "WDegree" => &self.weighted_degree,
            "DegreeCentr" => &self.degree_centrality,
            "Triads" => &self.triads,
            "PageRank" => &self.pagerank,
            "ArtPoint" => &self.articulation_point,
            "Hits_Auth" => &self.hits_auth,
            "Hits_Hub" => &self.hits_hub,
            _ => return None,
        })
    }
}

/// `NodeStats_<Statistic>_<Network>`
pub fn stat_column_name(stat: &str, network: &str) -> String {
    format!("NodeStats_{stat}_{network}")
}

/// Node statistics of the snapshots a set of periods needs.
#[derive(Debug, Clone)]
pub struct NetworkStats {
    per_snapshot: Vec<Option<NodeStats>>,
}

impl NetworkStats {
    /// Computes statistics for the snapshots in force at `periods`.
    pub fn compute(tn: &TemporalNetwork, periods: &[i64], pr: &PageRankConfig) -> NetworkStats {
        let mut wanted = vec![false; tn.snapshots().len()];
        for &p in periods {
            if let Some(i) = tn.snapshot_index_at(p) {
                wanted[i] = true;
            }
        }
        let idx: Vec<usize> = (0..wanted.len()).filter(|&i| wanted[i]).collect();
        let computed = par::map(&idx, |&i| NodeStats::compute(&tn.snapshots()[i], pr));
        let mut per_snapshot = vec![None; wanted.len()];
        for (i, s) in idx.into_iter().zip(computed) {
            per_snapshot[i] = Some(s);
        }
        NetworkStats { per_snapshot }
    }

    /// Snapshot position and statistics in force at `period`, if computed.
    pub fn at(&self, tn: &TemporalNetwork, period: i64) -> Option<(usize, &NodeStats)> {
        let i = tn.snapshot_index_at(period)?;
        self.per_snapshot[i].as_ref().map(|s| (i, s))
    }
}

/// Node statistics for every (entity, period) row requested. Entities absent
/// from a snapshot are treated as isolated and get zeros.
///
/// `rows` holds entity names and periods; static networks answer every
/// period from their single snapshot.
pub fn node_stats_frame(
    tn: &TemporalNetwork,
    network: &str,
    rows: &[(String, i64)],
    stats: &NetworkStats,
    include_weighted_degree: bool,
) -> FeatureFrame {
    let mut stat_names: Vec<&str> = STAT_NAMES.to_vec();
    if include_weighted_degree {
        stat_names.push("WDegree");
    }
    let provenance = if tn.is_static() {
        Provenance::Static
    } else {
        Provenance::SamePeriod
    };
    let mut frame = FeatureFrame::new(rows.to_vec());
    for stat in stat_names {
        let values = rows
            .iter()
            .map(|(entity, period)| {
                let Some((idx, s)) = stats.at(tn, *period) else {
                    return 0.0;
                };
                tn.entity_index(entity)
                    .and_then(|e| tn.snapshots()[idx].local_index(e))
                    .map_or(0.0, |v| s.stat(stat).expect("known stat")[v])
            })
            .collect();
        frame
            .push_column(
                &stat_column_name(stat, network),
                FeatureGroup::C,
                provenance,
                values,
            )
            .expect("row-aligned column");
    }
    frame
}
