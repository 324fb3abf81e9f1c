//! Graph autoencoder: a two-layer convolutional encoder and the inner
//! product decoder `σ(Z Zᵀ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{relu_backward, relu_in_place, seeded_rng, Adam, GcnLayerParams, GnnConfig, LayerCache};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{dot, log_sigmoid, sigmoid, Matrix, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaeModel {
    pub config: GnnConfig,
    pub layers: Vec<GcnLayerParams>,
    pub loss_history: Vec<f64>,
}

struct Forward {
    z: Matrix,
    hidden: Matrix,
    caches: [LayerCache; 2],
}

impl GaeModel {
    pub fn init(input_dim: usize, cfg: &GnnConfig) -> GaeModel {
        let mut rng = seeded_rng(cfg.seed, 0x6AE0);
        let layers = vec![
            GcnLayerParams::init(input_dim, cfg.hidden, cfg.tied, &mut rng),
            GcnLayerParams::init(cfg.hidden, cfg.embedding_dim, cfg.tied, &mut rng),
        ];
        GaeModel {
            config: cfg.clone(),
            layers,
            loss_history: Vec::new(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[1].output_width()
    }

    fn forward(&self, adj: &SparseMatrix, x: &Matrix) -> Result<Forward> {
        if x.cols() != self.layers[0].self_weight.rows() {
            return Err(Error::Dimension("input width does not match the encoder".into()));
        }
        let (mut hidden, c1) = self.layers[0].forward(adj, x.clone())?;
        relu_in_place(&mut hidden);
        let (z, c2) = self.layers[1].forward(adj, hidden.clone())?;
        Ok(Forward {
            z,
            hidden,
            caches: [c1, c2],
        })
    }

    /// Bottleneck embeddings `Z`, one row per node.
    pub fn embed(&self, g: &Graph, x: &Matrix) -> Result<Matrix> {
        if x.rows() != g.node_count() {
            return Err(Error::Dimension("feature rows do not match the graph".into()));
        }
        Ok(self.forward(&g.normalized_adjacency(), x)?.z)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Reconstructed link probability `σ(z_u · z_v)`.
pub fn edge_probability(z: &Matrix, u: usize, v: usize) -> f64 {
    sigmoid(dot(z.row(u), z.row(v)))
}

/// Mean binary cross-entropy over `positives` (label 1) and `negatives`
/// (label 0) plus weight decay, and its gradient in `params()` order.
pub fn gae_loss_and_gradient(
    model: &GaeModel,
    adj: &SparseMatrix,
    x: &Matrix,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<(f64, Vec<Matrix>)> {
    let fwd = model.forward(adj, x)?;
    let z = &fwd.z;
    let total = (positives.len() + negatives.len()).max(1) as f64;
    let mut loss = 0.0;
    let mut d_z = Matrix::zeros(z.rows(), z.cols());
    let pairs = positives
        .iter()
        .map(|&p| (p, 1.0))
        .chain(negatives.iter().map(|&p| (p, 0.0)));
    for ((u, v), label) in pairs {
        let s = dot(z.row(u), z.row(v));
        loss -= if label > 0.0 {
            log_sigmoid(s)
        } else {
            log_sigmoid(-s)
        };
        let c = (sigmoid(s) - label) / total;
        for k in 0..z.cols() {
            let (zu, zv) = (z[(u, k)], z[(v, k)]);
            d_z[(u, k)] += c * zv;
            d_z[(v, k)] += c * zu;
        }
    }
    loss /= total;
    let decay = model.config.weight_decay;
    loss += decay * model.layers.iter().map(GcnLayerParams::decay_penalty).sum::<f64>();

    let (mut g2, d_hidden) = model.layers[1].backward(adj, &fwd.caches[1], &d_z, true)?;
    let mut d_hidden = d_hidden.expect("requested");
    relu_backward(&mut d_hidden, &fwd.hidden);
    let (mut g1, _) = model.layers[0].backward(adj, &fwd.caches[0], &d_hidden, false)?;
    model.layers[0].add_decay(&mut g1, decay);
    model.layers[1].add_decay(&mut g2, decay);
    g1.extend(g2);
    Ok((loss, g1))
}

/// Uniform node pairs that are not edges. Gives up quietly on very dense
/// graphs where few non-edges exist.
pub(crate) fn sample_non_edges<R: Rng>(g: &Graph, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = g.node_count();
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    let mut attempts = 0;
    while out.len() < count && attempts < 20 * count + 100 {
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !g.has_edge(u, v) {
            out.push((u, v));
        }
    }
    out
}

/// Full-batch training with non-edges resampled every epoch.
pub fn train_gae(g: &Graph, x: &Matrix, cfg: &GnnConfig) -> Result<GaeModel> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyInput("cannot train on an empty graph".into()));
    }
    if x.rows() != g.node_count() {
        return Err(Error::Dimension("feature rows do not match the graph".into()));
    }
    let adj = g.normalized_adjacency();
    let positives: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
    let mut model = GaeModel::init(x.cols(), cfg);
    let shapes: Vec<_> = model.params().iter().map(|m| m.shape()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    let mut rng = seeded_rng(cfg.seed, 0x4E6);
    for _ in 0..cfg.epochs {
        let negatives = sample_non_edges(g, positives.len() * cfg.negative_ratio, &mut rng);
        let (loss, grads) = gae_loss_and_gradient(&model, &adj, x, &positives, &negatives)?;
        model.loss_history.push(loss);
        adam.update(model.params_mut(), &grads);
    }
    Ok(model)
}
