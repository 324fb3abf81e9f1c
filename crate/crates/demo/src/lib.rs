//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function takes plain numbers or edge-list text and returns
//! a JSON string. The work happens in ordinary Rust functions so it can be
//! tested natively.

use std::collections::BTreeMap;

use graphscore::graph::Graph;
use graphscore::metrics::auc;
use graphscore::n2v::{biased_walks, N2VConfig};
use graphscore::netstats::{articulation_points, bridges, hits, pagerank, triads, PageRankConfig};
use graphscore::synth::{ever_defaulted, generate, neighbor_mean_risk, SynthConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct HomophilyProbe {
    pub people: usize,
    pub companies: usize,
    pub family_edges: usize,
    pub prevalence: f64,
    pub fixed_point_iterations: usize,
    /// AUC of the neighbors' mean latent risk as a score for defaulting.
    pub neighbor_auc: f64,
}

#[derive(Debug, Serialize)]
pub struct WalkSummary {
    pub nodes: usize,
    /// First walk from the start node.
    pub walk: Vec<u32>,
    /// Visits per node over all walks from the start node.
    pub visits: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct Centrality {
    pub pagerank: Vec<f64>,
    pub authority: Vec<f64>,
    pub articulation: Vec<bool>,
    pub bridges: Vec<(usize, usize)>,
    pub triangles: Vec<u64>,
    pub iterations: usize,
}

/// Parses `u v [weight]` lines; blank lines and `#` comments are skipped.
pub fn parse_edges(text: &str) -> Result<Graph, String> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        let bad = || format!("line {}: expected `u v [weight]`", i + 1);
        if !(2..=3).contains(&fields.len()) {
            return Err(bad());
        }
        let u: usize = fields[0].parse().map_err(|_| bad())?;
        let v: usize = fields[1].parse().map_err(|_| bad())?;
        let w: f64 = fields.get(2).map_or(Ok(1.0), |f| f.parse()).map_err(|_| bad())?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    if edges.is_empty() {
        return Err("no edges".into());
    }
    Graph::from_edges(n, &edges).map_err(|e| e.to_string())
}

/// Generates a small population and measures how much the neighbors' risk
/// says about an entity's own defaults.
pub fn probe_homophily(beta: f64, people: usize, seed: u64) -> Result<HomophilyProbe, String> {
    let cfg = SynthConfig {
        n_people: people,
        n_companies: (people / 10).max(10),
        beta,
        seed,
        ..Default::default()
    };
    let data = generate(&cfg).map_err(|e| e.to_string())?;
    let (scores, labels): (Vec<f64>, Vec<bool>) = neighbor_mean_risk(&data)
        .into_iter()
        .zip(ever_defaulted(&data))
        .filter(|(s, _)| !s.is_nan())
        .unzip();
    Ok(HomophilyProbe {
        people: cfg.n_people,
        companies: cfg.n_companies,
        family_edges: data.family.snapshots()[0].edge_count(),
        prevalence: data.prevalence,
        fixed_point_iterations: data.fixed_point_iterations,
        neighbor_auc: auc(&scores, &labels),
    })
}

/// Second-order walks from `start` under return parameter `p` and in-out
/// parameter `q`.
pub fn explore_walks(edges: &str, start: usize, p: f64, q: f64, length: usize, walks: usize, seed: u64) -> Result<WalkSummary, String> {
    let g = parse_edges(edges)?;
    if start >= g.node_count() {
        return Err(format!("start node {start} is not in the graph"));
    }
    let cfg = N2VConfig {
        walks_per_node: walks,
        walk_length: length,
        p,
        q,
        seed,
        ..Default::default()
    };
    let corpus = biased_walks(&g, &cfg).map_err(|e| e.to_string())?;
    let from_start: Vec<&Vec<u32>> = corpus.walks.iter().filter(|w| w.first() == Some(&(start as u32))).collect();
    let mut visits = vec![0; g.node_count()];
    for w in &from_start {
        for &v in w.iter().skip(1) {
            visits[v as usize] += 1;
        }
    }
    Ok(WalkSummary {
        nodes: g.node_count(),
        walk: from_start.first().map(|w| w.to_vec()).unwrap_or_default(),
        visits,
    })
}

pub fn centrality(edges: &str, damping: f64) -> Result<Centrality, String> {
    if !(0.0..1.0).contains(&damping) {
        return Err("damping must be in [0, 1)".into());
    }
    let g = parse_edges(edges)?;
    let pr = pagerank(
        &g,
        &PageRankConfig {
            damping,
            ..Default::default()
        },
    );
    let cut: BTreeMap<usize, (usize, usize)> = g
        .edges()
        .iter()
        .zip(bridges(&g))
        .enumerate()
        .filter(|(_, (_, b))| *b)
        .map(|(i, (e, _))| (i, (e.u, e.v)))
        .collect();
    Ok(Centrality {
        pagerank: pr.scores,
        authority: hits(&g, 1e-10, 10_000).authority,
        articulation: articulation_points(&g),
        bridges: cut.into_values().collect(),
        triangles: triads(&g),
        iterations: pr.iterations,
    })
}

fn to_js<T: Serialize>(result: Result<T, String>) -> Result<String, JsValue> {
    result
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = probeHomophily)]
pub fn probe_homophily_js(beta: f64, people: usize, seed: u32) -> Result<String, JsValue> {
    to_js(probe_homophily(beta, people, u64::from(seed)))
}

#[wasm_bindgen(js_name = exploreWalks)]
pub fn explore_walks_js(edges: &str, start: usize, p: f64, q: f64, length: usize, walks: usize, seed: u32) -> Result<String, JsValue> {
    to_js(explore_walks(edges, start, p, q, length, walks, u64::from(seed)))
}

#[wasm_bindgen(js_name = centrality)]
pub fn centrality_js(edges: &str, damping: f64) -> Result<String, JsValue> {
    to_js(centrality(edges, damping))
}
