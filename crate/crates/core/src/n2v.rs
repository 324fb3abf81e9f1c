//! Node2Vec: second-order biased random walks and skip-gram with negative
//! sampling.
//!
//! Walks and training run on a canonical relabeling of the snapshot (nodes
//! sorted by entity id) and every random stream is keyed by entity id, so
//! the result depends on the graph and the seed but not on the order nodes
//! were loaded in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureFrame, FeatureGroup, Provenance};
use crate::graph::{Graph, TemporalNetwork};
use crate::linalg::{dot, log_sigmoid, sigmoid, Matrix};
use crate::par;

/// Defaults follow common Node2Vec practice; `dimensions = 8` matches the
/// eight embedding columns per network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct N2VConfig {
    pub dimensions: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for N2VConfig {
    fn default() -> Self {
        N2VConfig {
            dimensions: 8,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            p: 1.0,
            q: 1.0,
            negatives: 5,
            epochs: 3,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl N2VConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions == 0
            || self.walks_per_node == 0
            || self.walk_length == 0
            || self.window == 0
            || self.negatives == 0
        {
            return Err(Error::Config("node2vec counts must be >= 1".into()));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::Config("node2vec p and q must be > 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("node2vec learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Walker's alias method over a fixed discrete distribution.
#[derive(Debug, Clone)]
pub(crate) struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub(crate) fn new(weights: &[f64]) -> AliasTable {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0u32; n];
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l as u32;
            prob[l] -= 1.0 - prob[s];
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// Snapshot relabeled so node `i` is the i-th smallest entity id.
struct CanonicalGraph {
    entities: Vec<u32>,
    /// canonical index -> local index in the source graph
    to_local: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl CanonicalGraph {
    fn new(g: &Graph) -> CanonicalGraph {
        let n = g.node_count();
        let mut to_local: Vec<usize> = (0..n).collect();
        to_local.sort_by_key(|&v| g.entity(v));
        let mut to_canon = vec![0u32; n];
        for (c, &l) in to_local.iter().enumerate() {
            to_canon[l] = c as u32;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for &l in &to_local {
            let mut nbs: Vec<(u32, f64)> = g
                .neighbors(l)
                .iter()
                .map(|nb| (to_canon[nb.node], nb.weight))
                .collect();
            nbs.sort_by_key(|x| x.0);
            for (t, w) in nbs {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        CanonicalGraph {
            entities: to_local.iter().map(|&l| g.entity(l)).collect(),
            to_local,
            offsets,
            targets,
            weights,
        }
    }

    fn n(&self) -> usize {
        self.entities.len()
    }

    fn span(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.targets[self.span(a)].binary_search(&(b as u32)).is_ok()
    }
}

/// Random walks over one snapshot. Node ids in `walks` are local indices of
/// the source graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub n_nodes: usize,
    pub walks: Vec<Vec<u32>>,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }
}

struct Walker<'a> {
    g: &'a CanonicalGraph,
    p: f64,
    q: f64,
    first_order: Vec<Option<AliasTable>>,
    /// keyed by the slot of `prev` in the adjacency of `cur`
    second_order: Vec<Option<AliasTable>>,
}

impl<'a> Walker<'a> {
    fn new(g: &'a CanonicalGraph, p: f64, q: f64) -> Self {
        Walker {
            g,
            p,
            q,
            first_order: vec![None; g.n()],
            second_order: vec![None; g.targets.len()],
        }
    }

    fn first_step<R: Rng>(&mut self, v: usize, rng: &mut R) -> usize {
        let g = self.g;
        let table = self.first_order[v].get_or_insert_with(|| AliasTable::new(&g.weights[g.span(v)]));
        g.targets[g.offsets[v] + table.sample(rng)] as usize
    }

    fn next_step<R: Rng>(&mut self, prev: usize, cur: usize, rng: &mut R) -> usize {
        let g = self.g;
        let span = g.span(cur);
        let slot = span.start
            + g.targets[span.clone()]
                .binary_search(&(prev as u32))
                .expect("walk follows edges");
        let (p, q) = (self.p, self.q);
        let table = self.second_order[slot].get_or_insert_with(|| {
            let biased: Vec<f64> = span
                .clone()
                .map(|k| {
                    let x = g.targets[k] as usize;
                    let w = g.weights[k];
                    if x == prev {
                        w / p
                    } else if g.has_edge(prev, x) {
                        w
                    } else {
                        w / q
                    }
                })
                .collect();
            AliasTable::new(&biased)
        });
        g.targets[span.start + table.sample(rng)] as usize
    }

    fn walk(&mut self, start: usize, length: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start as u32);
        if self.g.span(start).is_empty() {
            return walk;
        }
        while walk.len() < length {
            let cur = *walk.last().unwrap() as usize;
            let next = if walk.len() == 1 {
                self.first_step(cur, rng)
            } else {
                let prev = walk[walk.len() - 2] as usize;
                self.next_step(prev, cur, rng)
            };
            walk.push(next as u32);
        }
        walk
    }
}

fn walks_canonical(g: &CanonicalGraph, cfg: &N2VConfig) -> Vec<Vec<u32>> {
    let mut walker = Walker::new(g, cfg.p, cfg.q);
    let mut walks = Vec::with_capacity(g.n() * cfg.walks_per_node);
    for r in 0..cfg.walks_per_node {
        let mut order: Vec<usize> = (0..g.n()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x5157, r as u64]));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        for v in order {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, g.entities[v] as u64, r as u64]));
            walks.push(walker.walk(v, cfg.walk_length, &mut rng));
        }
    }
    walks
}

/// `walks_per_node` walks of `walk_length` nodes from every node. Each walk
/// draws from its own stream keyed by (seed, entity, walk index).
pub fn biased_walks(g: &Graph, cfg: &N2VConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyInput("graph has no nodes".into()));
    }
    let cg = CanonicalGraph::new(g);
    let walks = walks_canonical(&cg, cfg)
        .into_iter()
        .map(|w| w.into_iter().map(|c| cg.to_local[c as usize] as u32).collect())
        .collect();
    Ok(WalkCorpus {
        n_nodes: g.node_count(),
        walks,
    })
}

/// One skip-gram example: a center node, its observed context node and the
/// sampled negative nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgnsSample {
    pub center: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

/// Negative-sampling loss of one example and its gradients with respect to
/// the center's input vector and each output vector involved.
fn example_gradient(
    input: &Matrix,
    output: &Matrix,
    s: &SgnsSample,
) -> (f64, Vec<f64>, Vec<(usize, Vec<f64>)>) {
    let w = input.row(s.center);
    let mut g_in = vec![0.0; w.len()];
    let mut g_out = Vec::with_capacity(1 + s.negatives.len());
    let mut loss = 0.0;
    let targets = std::iter::once((s.context, 1.0)).chain(s.negatives.iter().map(|&n| (n, 0.0)));
    for (node, label) in targets {
        let o = output.row(node);
        let z = dot(w, o);
        loss -= if label > 0.0 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        };
        let g = sigmoid(z) - label;
        for (gi, oi) in g_in.iter_mut().zip(o) {
            *gi += g * oi;
        }
        g_out.push((node, w.iter().map(|wi| g * wi).collect()));
    }
    (loss, g_in, g_out)
}

/// Total loss `Σ -ln σ(w_c·o_x) - Σ_k ln σ(-w_c·o_k)` over `samples`.
pub fn sgns_loss(input: &Matrix, output: &Matrix, samples: &[SgnsSample]) -> f64 {
    samples
        .iter()
        .map(|s| example_gradient(input, output, s).0)
        .sum()
}

/// Gradient of [`sgns_loss`] with respect to the input and output matrices.
pub fn sgns_gradient(input: &Matrix, output: &Matrix, samples: &[SgnsSample]) -> (Matrix, Matrix) {
    let mut gi = Matrix::zeros(input.rows(), input.cols());
    let mut go = Matrix::zeros(output.rows(), output.cols());
    for s in samples {
        let (_, g_in, g_out) = example_gradient(input, output, s);
        for (a, b) in gi.row_mut(s.center).iter_mut().zip(&g_in) {
            *a += b;
        }
        for (node, g) in g_out {
            for (a, b) in go.row_mut(node).iter_mut().zip(&g) {
                *a += b;
            }
        }
    }
    (gi, go)
}

/// Node embeddings of one snapshot, rows indexed by local node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub period: i64,
    pub vectors: Matrix,
    /// Mean training loss per example, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

fn init_input(entities: &[u32], d: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(entities.len(), d);
    let bound = 0.5 / d as f64;
    for (i, &e) in entities.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x1417, e as u64]));
        for x in m.row_mut(i) {
            *x = rng.random_range(-bound..bound);
        }
    }
    m
}

/// Trains skip-gram vectors on canonical walks; returns canonical-order
/// vectors and per-epoch losses.
fn train_canonical(
    walks: &[Vec<u32>],
    entities: &[u32],
    cfg: &N2VConfig,
) -> (Matrix, Vec<f64>) {
    let n = entities.len();
    let d = cfg.dimensions;
    let mut input = init_input(entities, d, cfg.seed);
    let mut output = Matrix::zeros(n, d);
    let mut counts = vec![0.0f64; n];
    for w in walks {
        for &v in w {
            counts[v as usize] += 1.0;
        }
    }
    let noise = AliasTable::new(&counts.iter().map(|c| c.powf(0.75)).collect::<Vec<_>>());
    let total_tokens: usize = walks.iter().map(Vec::len).sum::<usize>() * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x56A3]));
    let mut processed = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut g_in = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut examples = 0usize;
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = cfg.learning_rate
                    * (1.0 - processed as f64 / total_tokens.max(1) as f64).max(1e-4);
                processed += 1;
                let reach = rng.random_range(1..=cfg.window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(walk.len() - 1);
                let c = center as usize;
                for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    g_in.iter_mut().for_each(|x| *x = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx as usize, 1.0)
                        } else {
                            let neg = noise.sample(&mut rng);
                            if neg == ctx as usize {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let z = dot(input.row(c), output.row(target));
                        loss -= if label > 0.0 {
                            log_sigmoid(z)
                        } else {
                            log_sigmoid(-z)
                        };
                        let g = sigmoid(z) - label;
                        let (wc, ot) = (input.row(c).to_vec(), output.row_mut(target));
                        for ((gi, o), w) in g_in.iter_mut().zip(ot.iter_mut()).zip(&wc) {
                            *gi += g * *o;
                            *o -= lr * g * w;
                        }
                    }
                    for (w, gi) in input.row_mut(c).iter_mut().zip(&g_in) {
                        *w -= lr * gi;
                    }
                    examples += 1;
                }
            }
        }
        epoch_loss.push(if examples > 0 {
            loss / examples as f64
        } else {
            0.0
        });
    }
    (input, epoch_loss)
}

/// Skip-gram with negative sampling over a walk corpus of `g`.
pub fn train_skipgram(g: &Graph, corpus: &WalkCorpus, cfg: &N2VConfig, period: i64) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    if corpus.walks.is_empty() {
        return Err(Error::EmptyInput("empty walk corpus".into()));
    }
    if corpus.n_nodes != g.node_count() {
        return Err(Error::Dimension("corpus does not belong to this graph".into()));
    }
    let cg = CanonicalGraph::new(g);
    let mut to_canon = vec![0u32; g.node_count()];
    for (c, &l) in cg.to_local.iter().enumerate() {
        to_canon[l] = c as u32;
    }
    let walks: Vec<Vec<u32>> = corpus
        .walks
        .iter()
        .map(|w| w.iter().map(|&l| to_canon[l as usize]).collect())
        .collect();
    let (canon_vectors, epoch_loss) = train_canonical(&walks, &cg.entities, cfg);
    let mut vectors = Matrix::zeros(g.node_count(), cfg.dimensions);
    for (c, &l) in cg.to_local.iter().enumerate() {
        vectors.row_mut(l).copy_from_slice(canon_vectors.row(c));
    }
    Ok(EmbeddingMatrix {
        period,
        vectors,
        epoch_loss,
    })
}

/// Walks plus training for one snapshot.
pub fn embed_snapshot(g: &Graph, cfg: &N2VConfig, period: i64) -> Result<EmbeddingMatrix> {
    let corpus = biased_walks(g, cfg)?;
    train_skipgram(g, &corpus, cfg, period)
}

pub fn n2v_column_name(k: usize, network: &str) -> String {
    format!("N2V_EMB_{:02}_{network}", k + 1)
}

pub fn n2v_presence_column(network: &str) -> String {
    format!("N2V_Present_{network}")
}

/// Node2Vec columns for the requested (entity, period) rows. Static
/// networks are embedded once; temporal networks once per period that rows
/// reference. Entities outside the snapshot get zero vectors and a 0
/// presence flag.
pub fn n2v_frame(
    tn: &TemporalNetwork,
    network: &str,
    rows: &[(String, i64)],
    cfg: &N2VConfig,
) -> Result<FeatureFrame> {
    cfg.validate()?;
    let mut snapshot_ids: Vec<usize> = rows
        .iter()
        .filter_map(|(_, p)| tn.snapshot_index_at(*p))
        .collect();
    snapshot_ids.sort_unstable();
    snapshot_ids.dedup();
    let embeddings: Vec<Result<EmbeddingMatrix>> = par::map(&snapshot_ids, |&i| {
        let g = &tn.snapshots()[i];
        let period = tn.periods()[i];
        let mut c = cfg.clone();
        c.seed = mix_seed(&[cfg.seed, period as u64]);
        if g.is_empty() {
            return Ok(EmbeddingMatrix {
                period,
                vectors: Matrix::zeros(0, cfg.dimensions),
                epoch_loss: Vec::new(),
            });
        }
        embed_snapshot(g, &c, period)
    });
    let mut by_snapshot: Vec<Option<EmbeddingMatrix>> = vec![None; tn.snapshots().len()];
    for (i, e) in snapshot_ids.into_iter().zip(embeddings) {
        by_snapshot[i] = Some(e?);
    }
    let d = cfg.dimensions;
    let mut cols = vec![vec![0.0; rows.len()]; d];
    let mut present = vec![0.0; rows.len()];
    for (r, (entity, period)) in rows.iter().enumerate() {
        let Some(idx) = tn.snapshot_index_at(*period) else {
            continue;
        };
        let Some(v) = tn
            .entity_index(entity)
            .and_then(|e| tn.snapshots()[idx].local_index(e))
        else {
            continue;
        };
        let emb = by_snapshot[idx].as_ref().expect("embedded");
        for (k, col) in cols.iter_mut().enumerate() {
            col[r] = emb.vectors[(v, k)];
        }
        present[r] = 1.0;
    }
    let provenance = if tn.is_static() {
        Provenance::Static
    } else {
        Provenance::SamePeriod
    };
    let mut frame = FeatureFrame::new(rows.to_vec());
    for (k, col) in cols.into_iter().enumerate() {
        frame.push_column(&n2v_column_name(k, network), FeatureGroup::E, provenance, col)?;
    }
    frame.push_column(&n2v_presence_column(network), FeatureGroup::E, provenance, present)?;
    Ok(frame)
}
