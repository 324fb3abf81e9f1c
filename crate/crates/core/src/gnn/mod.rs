//! Spectral graph convolution models: a first-order Chebyshev GCN node
//! classifier and a graph autoencoder, both trained full-batch with
//! hand-written backward passes.
//!
//! A layer computes `X Θ₀ − Â X Θ₁ + b` with `Â = D^{-1/2} A D^{-1/2}`.
//! The tied variant uses a single `Θ` as `(X + Â X) Θ + b`.

mod gae;
mod gcn;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gae::{edge_probability, gae_loss_and_gradient, train_gae, GaeModel};
pub use gcn::{
    gcn_loss_and_gradient, train_gcn, GcnModel, CLASS_DEFAULTER, CLASS_NON_DEFAULTER, CLASS_UNBANKED, N_CLASSES,
};

use crate::error::{Error, Result};
use crate::frame::{FeatureFrame, FeatureGroup, Provenance};
use crate::graph::{Graph, NodeAttributeTable, TemporalNetwork};
use crate::linalg::{Matrix, SparseMatrix};
use crate::n2v::mix_seed;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub hidden: usize,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Share one weight matrix between the self and neighbor terms.
    pub tied: bool,
    /// Sampled non-edges per observed edge for the autoencoder.
    pub negative_ratio: usize,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            hidden: 16,
            embedding_dim: 8,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            tied: false,
            negative_ratio: 1,
            seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("gnn layer widths must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("gnn learning rate must be > 0 and weight decay >= 0".into()));
        }
        Ok(())
    }
}

/// `X Θ₀ − Â X Θ₁` for the graph's normalized adjacency.
pub fn gcn_layer(x: &Matrix, g: &Graph, theta0: &Matrix, theta1: &Matrix) -> Result<Matrix> {
    if x.rows() != g.node_count() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} nodes",
            x.rows(),
            g.node_count()
        )));
    }
    if theta0.shape() != theta1.shape() || theta0.rows() != x.cols() {
        return Err(Error::Dimension("layer weights do not match the input width".into()));
    }
    let adj = g.normalized_adjacency();
    let mut out = x.matmul(theta0)?;
    out.axpy(-1.0, &adj.matmul(x)?.matmul(theta1)?);
    Ok(out)
}

/// Weights of one convolution layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayerParams {
    pub self_weight: Matrix,
    /// `None` for the tied variant.
    pub neighbor_weight: Option<Matrix>,
    /// 1 x out
    pub bias: Matrix,
}

/// Forward values kept for the backward pass.
pub(crate) struct LayerCache {
    input: Matrix,
    propagated: Matrix,
}

impl GcnLayerParams {
    pub(crate) fn init(fan_in: usize, fan_out: usize, tied: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut draw = || {
            let mut m = Matrix::zeros(fan_in, fan_out);
            for x in m.as_mut_slice() {
                *x = rng.random_range(-bound..bound);
            }
            m
        };
        let self_weight = draw();
        let neighbor_weight = if tied { None } else { Some(draw()) };
        GcnLayerParams {
            self_weight,
            neighbor_weight,
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn output_width(&self) -> usize {
        self.self_weight.cols()
    }

    pub(crate) fn forward(&self, adj: &SparseMatrix, input: Matrix) -> Result<(Matrix, LayerCache)> {
        let propagated = adj.matmul(&input)?;
        let mut out = input.matmul(&self.self_weight)?;
        match &self.neighbor_weight {
            Some(w1) => out.axpy(-1.0, &propagated.matmul(w1)?),
            None => out.add_assign(&propagated.matmul(&self.self_weight)?),
        }
        out.add_row_vector(self.bias.as_slice());
        Ok((out, LayerCache { input, propagated }))
    }

    /// Gradients in `params()` order plus the gradient w.r.t. the input.
    pub(crate) fn backward(
        &self,
        adj: &SparseMatrix,
        cache: &LayerCache,
        d_out: &Matrix,
        need_input_grad: bool,
    ) -> Result<(Vec<Matrix>, Option<Matrix>)> {
        let mut grads = Vec::with_capacity(3);
        let bias = Matrix::from_vec(1, d_out.cols(), d_out.column_sums())?;
        match &self.neighbor_weight {
            Some(w1) => {
                grads.push(cache.input.t_matmul(d_out)?);
                let mut g1 = cache.propagated.t_matmul(d_out)?;
                g1.scale(-1.0);
                grads.push(g1);
                grads.push(bias);
                let d_in = if need_input_grad {
                    let mut d = d_out.matmul_t(&self.self_weight)?;
                    d.axpy(-1.0, &adj.matmul(&d_out.matmul_t(w1)?)?);
                    Some(d)
                } else {
                    None
                };
                Ok((grads, d_in))
            }
            None => {
                let mut g0 = cache.input.t_matmul(d_out)?;
                g0.add_assign(&cache.propagated.t_matmul(d_out)?);
                grads.push(g0);
                grads.push(bias);
                let d_in = if need_input_grad {
                    let d = d_out.matmul_t(&self.self_weight)?;
                    let mut total = adj.matmul(&d)?;
                    total.add_assign(&d);
                    Some(total)
                } else {
                    None
                };
                Ok((grads, d_in))
            }
        }
    }

    pub(crate) fn params(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.self_weight];
        if let Some(w) = &self.neighbor_weight {
            v.push(w);
        }
        v.push(&self.bias);
        v
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.self_weight];
        if let Some(w) = &mut self.neighbor_weight {
            v.push(w);
        }
        v.push(&mut self.bias);
        v
    }

    /// `½ Σ w²` over weight matrices (biases are not decayed).
    pub(crate) fn decay_penalty(&self) -> f64 {
        0.5 * (self.self_weight.frobenius_sq()
            + self.neighbor_weight.as_ref().map_or(0.0, Matrix::frobenius_sq))
    }

    /// Adds `decay * w` to weight gradients laid out as in `params()`.
    pub(crate) fn add_decay(&self, grads: &mut [Matrix], decay: f64) {
        grads[0].axpy(decay, &self.self_weight);
        if let Some(w) = &self.neighbor_weight {
            grads[1].axpy(decay, w);
        }
    }
}

pub(crate) fn relu_in_place(m: &mut Matrix) {
    for x in m.as_mut_slice() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries where the pre-activation was not positive.
pub(crate) fn relu_backward(d: &mut Matrix, activated: &Matrix) {
    for (g, a) in d.as_mut_slice().iter_mut().zip(activated.as_slice()) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream]))
}

/// Adam over a fixed list of parameter matrices.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub(crate) fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub(crate) fn update(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (self.m[k].as_mut_slice(), self.v[k].as_mut_slice());
            for (((x, gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *x -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
    }
}

/// One single-attribute model pair (a GCN and a GAE) of the grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnSpec {
    pub attribute: String,
}

impl GnnSpec {
    /// Short tag used in column names: `ATT04` becomes `04`.
    pub fn tag(&self) -> &str {
        self.attribute.strip_prefix("ATT").unwrap_or(&self.attribute)
    }
}

/// The first `k` attributes, one model pair each.
pub fn gnn_model_grid(attribute_names: &[String], k: usize) -> Vec<GnnSpec> {
    attribute_names
        .iter()
        .take(k)
        .map(|a| GnnSpec {
            attribute: a.clone(),
        })
        .collect()
}

/// z-score statistics frozen at the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: f64,
    pub sd: f64,
}

impl InputNorm {
    pub fn fit(values: &[f64]) -> InputNorm {
        let seen: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if seen.is_empty() {
            return InputNorm { mean: 0.0, sd: 1.0 };
        }
        let n = seen.len() as f64;
        let mean = seen.iter().sum::<f64>() / n;
        let var = seen.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        InputNorm { mean, sd }
    }

    /// Missing values map to 0, the training mean.
    pub fn apply(&self, v: f64) -> f64 {
        if v.is_finite() {
            (v - self.mean) / self.sd
        } else {
            0.0
        }
    }
}

/// Raw attribute values for the nodes of `g` at `period`.
pub fn node_attribute_values(
    tn: &TemporalNetwork,
    g: &Graph,
    attrs: &NodeAttributeTable,
    attribute: &str,
    period: i64,
) -> Result<Vec<f64>> {
    let a = attrs
        .attribute_index(attribute)
        .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))?;
    Ok(g.entities()
        .iter()
        .map(|&e| attrs.get(tn.entity_name(e), period, a))
        .collect())
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained GCN/GAE pair with the input statistics it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnCheckpoint {
    pub format_version: u32,
    pub network: String,
    pub spec: GnnSpec,
    pub train_period: i64,
    pub norm: InputNorm,
    pub gcn: GcnModel,
    pub gae: GaeModel,
}

impl GnnCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GnnCheckpoint> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: GnnCheckpoint = serde_json::from_reader(std::io::BufReader::new(f))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}

/// Trains one GCN and one GAE per spec on the snapshot at `train_period`.
/// `class_of` labels each entity of that snapshot for the GCN.
pub fn train_gnn_models(
    tn: &TemporalNetwork,
    network: &str,
    attrs: &NodeAttributeTable,
    specs: &[GnnSpec],
    train_period: i64,
    class_of: &(dyn Fn(&str) -> usize + Sync),
    cfg: &GnnConfig,
) -> Result<Vec<GnnCheckpoint>> {
    cfg.validate()?;
    let g = tn
        .snapshot_at(train_period)
        .ok_or_else(|| Error::EmptyInput(format!("{network} has no snapshot at period {train_period}")))?;
    if g.is_empty() {
        return Err(Error::EmptyInput(format!("{network} snapshot at {train_period} is empty")));
    }
    let labels: Vec<usize> = g.entities().iter().map(|&e| class_of(tn.entity_name(e))).collect();
    let results = par::map(specs, |spec| {
        let raw = node_attribute_values(tn, g, attrs, &spec.attribute, train_period)?;
        let norm = InputNorm::fit(&raw);
        let x = Matrix::column(&raw.iter().map(|&v| norm.apply(v)).collect::<Vec<_>>());
        let mut c = cfg.clone();
        c.seed = mix_seed(&[cfg.seed, hash_str(network), hash_str(&spec.attribute)]);
        let gcn = train_gcn(g, &x, &labels, &c)?;
        let gae = train_gae(g, &x, &c)?;
        Ok(GnnCheckpoint {
            format_version: CHECKPOINT_VERSION,
            network: network.to_string(),
            spec: spec.clone(),
            train_period,
            norm,
            gcn,
            gae,
        })
    });
    results.into_iter().collect()
}

pub(crate) fn hash_str(s: &str) -> u64 {
    // FNV-1a, stable across platforms and releases
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn cheb_column_name(spec: &GnnSpec, k: usize, network: &str) -> String {
    format!("CHEB{}_EMB_{:02}_{network}", spec.tag(), k + 1)
}

pub fn gae_column_name(spec: &GnnSpec, k: usize, network: &str) -> String {
    format!("GAE{}_EMB_{:02}_{network}", spec.tag(), k + 1)
}

pub fn gnn_presence_column(network: &str) -> String {
    format!("GNN_Present_{network}")
}

/// Per-snapshot model outputs: the row lookups are resolved once, then
/// every snapshot runs all frozen models.
fn apply_models(
    tn: &TemporalNetwork,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
    width: usize,
    run: &(dyn Fn(&Graph, &Matrix) -> Result<Matrix> + Sync),
    attribute: &str,
    norm: &InputNorm,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    // snapshot index -> (row, local node) pairs
    let mut by_snapshot: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tn.snapshots().len()];
    let mut present = vec![0.0; rows.len()];
    for (r, (entity, period)) in rows.iter().enumerate() {
        if let Some(idx) = tn.snapshot_index_at(*period) {
            let local = tn
                .entity_index(entity)
                .and_then(|e| tn.snapshots()[idx].local_index(e));
            if let Some(v) = local {
                by_snapshot[idx].push((r, v));
                present[r] = 1.0;
            }
        }
    }
    let jobs: Vec<usize> = (0..by_snapshot.len()).filter(|&i| !by_snapshot[i].is_empty()).collect();
    let outputs = par::map(&jobs, |&i| -> Result<Matrix> {
        let g = &tn.snapshots()[i];
        let period = tn.periods()[i];
        let raw = node_attribute_values(tn, g, attrs, attribute, period)?;
        let x = Matrix::column(&raw.iter().map(|&v| norm.apply(v)).collect::<Vec<_>>());
        run(g, &x)
    });
    let mut cols = vec![vec![0.0; rows.len()]; width];
    for (&i, out) in jobs.iter().zip(outputs) {
        let out = out?;
        for &(r, v) in &by_snapshot[i] {
            for (k, col) in cols.iter_mut().enumerate() {
                col[r] = out[(v, k)];
            }
        }
    }
    Ok((cols, present))
}

/// Frozen GCN posteriors for the requested rows (3 columns).
pub fn apply_gcn(
    ck: &GnnCheckpoint,
    tn: &TemporalNetwork,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
) -> Result<FeatureFrame> {
    if tn.is_static() {
        return apply_static(ck, tn, attrs, rows, true);
    }
    let run = |g: &Graph, x: &Matrix| ck.gcn.predict(g, x);
    let (cols, _) = apply_models(tn, attrs, rows, N_CLASSES, &run, &ck.spec.attribute, &ck.norm)?;
    let mut frame = FeatureFrame::new(rows.to_vec());
    for (k, col) in cols.into_iter().enumerate() {
        frame.push_column(
            &cheb_column_name(&ck.spec, k, &ck.network),
            FeatureGroup::E,
            Provenance::TrainedAt(ck.train_period),
            col,
        )?;
    }
    Ok(frame)
}

/// Frozen GAE bottleneck embeddings for the requested rows.
pub fn apply_gae(
    ck: &GnnCheckpoint,
    tn: &TemporalNetwork,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
) -> Result<FeatureFrame> {
    if tn.is_static() {
        return apply_static(ck, tn, attrs, rows, false);
    }
    let run = |g: &Graph, x: &Matrix| ck.gae.embed(g, x);
    let width = ck.gae.embedding_dim();
    let (cols, _) = apply_models(tn, attrs, rows, width, &run, &ck.spec.attribute, &ck.norm)?;
    let mut frame = FeatureFrame::new(rows.to_vec());
    for (k, col) in cols.into_iter().enumerate() {
        frame.push_column(
            &gae_column_name(&ck.spec, k, &ck.network),
            FeatureGroup::E,
            Provenance::TrainedAt(ck.train_period),
            col,
        )?;
    }
    Ok(frame)
}

/// A static network keeps its structure but node features still change per
/// period, so the frozen model runs once per distinct row period.
fn apply_static(
    ck: &GnnCheckpoint,
    tn: &TemporalNetwork,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
    posterior: bool,
) -> Result<FeatureFrame> {
    let g = &tn.snapshots()[0];
    let mut periods: Vec<i64> = rows.iter().map(|r| r.1).collect();
    periods.sort_unstable();
    periods.dedup();
    let outputs = par::map(&periods, |&p| -> Result<Matrix> {
        let raw = node_attribute_values(tn, g, attrs, &ck.spec.attribute, p)?;
        let x = Matrix::column(&raw.iter().map(|&v| ck.norm.apply(v)).collect::<Vec<_>>());
        if posterior {
            ck.gcn.predict(g, &x)
        } else {
            ck.gae.embed(g, &x)
        }
    });
    let outputs: Vec<Matrix> = outputs.into_iter().collect::<Result<_>>()?;
    let width = if posterior {
        N_CLASSES
    } else {
        ck.gae.embedding_dim()
    };
    let mut cols = vec![vec![0.0; rows.len()]; width];
    for (r, (entity, period)) in rows.iter().enumerate() {
        let local = tn.entity_index(entity).and_then(|e| g.local_index(e));
        if let Some(v) = local {
            let out = &outputs[periods.binary_search(period).expect("period listed")];
            for (k, col) in cols.iter_mut().enumerate() {
                col[r] = out[(v, k)];
            }
        }
    }
    let mut frame = FeatureFrame::new(rows.to_vec());
    for (k, col) in cols.into_iter().enumerate() {
        let name = if posterior {
            cheb_column_name(&ck.spec, k, &ck.network)
        } else {
            gae_column_name(&ck.spec, k, &ck.network)
        };
        frame.push_column(&name, FeatureGroup::E, Provenance::TrainedAt(ck.train_period), col)?;
    }
    Ok(frame)
}

/// All CHEB and GAE columns of a network plus one presence indicator.
pub fn gnn_frame(
    tn: &TemporalNetwork,
    network: &str,
    attrs: &NodeAttributeTable,
    rows: &[(String, i64)],
    models: &[GnnCheckpoint],
) -> Result<FeatureFrame> {
    let mut frame = FeatureFrame::new(rows.to_vec());
    for ck in models {
        frame.join(&apply_gcn(ck, tn, attrs, rows)?)?;
        frame.join(&apply_gae(ck, tn, attrs, rows)?)?;
    }
    let present = rows
        .iter()
        .map(|(entity, period)| {
            let hit = tn
                .snapshot_at(*period)
                .zip(tn.entity_index(entity))
                .is_some_and(|(g, e)| g.local_index(e).is_some());
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let provenance = models
        .first()
        .map_or(Provenance::SamePeriod, |m| Provenance::TrainedAt(m.train_period));
    frame.push_column(&gnn_presence_column(network), FeatureGroup::E, provenance, present)?;
    Ok(frame)
}
