//! Two-layer GCN node classifier with a softmax output.

use serde::{Deserialize, Serialize};

use super::{relu_backward, relu_in_place, seeded_rng, Adam, GcnLayerParams, GnnConfig, LayerCache};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{Matrix, SparseMatrix};

/// Output classes: non-defaulter, defaulter, unbanked.
pub const N_CLASSES: usize = 3;
pub const CLASS_NON_DEFAULTER: usize = 0;
pub const CLASS_DEFAULTER: usize = 1;
pub const CLASS_UNBANKED: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub config: GnnConfig,
    pub layers: Vec<GcnLayerParams>,
    /// Training loss before each update.
    pub loss_history: Vec<f64>,
}

struct Forward {
    logits: Matrix,
    hidden: Matrix,
    caches: [LayerCache; 2],
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    p
}

impl GcnModel {
    /// Seeded, untrained model for `input_dim` node features.
    pub fn init(input_dim: usize, cfg: &GnnConfig) -> GcnModel {
        let mut rng = seeded_rng(cfg.seed, 0xC4EB);
        let layers = vec![
            GcnLayerParams::init(input_dim, cfg.hidden, cfg.tied, &mut rng),
            GcnLayerParams::init(cfg.hidden, N_CLASSES, cfg.tied, &mut rng),
        ];
        GcnModel {
            config: cfg.clone(),
            layers,
            loss_history: Vec::new(),
        }
    }

    fn forward(&self, adj: &SparseMatrix, x: &Matrix) -> Result<Forward> {
        if x.cols() != self.layers[0].self_weight.rows() {
            return Err(Error::Dimension(format!(
                "model expects {} input columns, got {}",
                self.layers[0].self_weight.rows(),
                x.cols()
            )));
        }
        let (mut hidden, c1) = self.layers[0].forward(adj, x.clone())?;
        relu_in_place(&mut hidden);
        let (logits, c2) = self.layers[1].forward(adj, hidden.clone())?;
        Ok(Forward {
            logits,
            hidden,
            caches: [c1, c2],
        })
    }

    /// Per-node class posteriors (rows sum to 1).
    pub fn predict(&self, g: &Graph, x: &Matrix) -> Result<Matrix> {
        if x.rows() != g.node_count() {
            return Err(Error::Dimension("feature rows do not match the graph".into()));
        }
        let adj = g.normalized_adjacency();
        Ok(softmax_rows(&self.forward(&adj, x)?.logits))
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Mean softmax cross-entropy plus `½ λ Σ w²`, and its gradient in
/// `params()` order.
pub fn gcn_loss_and_gradient(
    model: &GcnModel,
    adj: &SparseMatrix,
    x: &Matrix,
    labels: &[usize],
) -> Result<(f64, Vec<Matrix>)> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} nodes", labels.len())));
    }
    let fwd = model.forward(adj, x)?;
    let probs = softmax_rows(&fwd.logits);
    let decay = model.config.weight_decay;
    let mut loss = 0.0;
    let mut d_logits = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[(i, y)].max(1e-300).ln();
        d_logits[(i, y)] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    loss *= scale;
    d_logits.scale(scale);
    loss += decay * model.layers.iter().map(GcnLayerParams::decay_penalty).sum::<f64>();

    let (mut g2, d_hidden) = model.layers[1].backward(adj, &fwd.caches[1], &d_logits, true)?;
    let mut d_hidden = d_hidden.expect("requested");
    relu_backward(&mut d_hidden, &fwd.hidden);
    let (mut g1, _) = model.layers[0].backward(adj, &fwd.caches[0], &d_hidden, false)?;
    model.layers[0].add_decay(&mut g1, decay);
    model.layers[1].add_decay(&mut g2, decay);
    g1.extend(g2);
    Ok((loss, g1))
}

/// Full-batch training of the node classifier with Adam.
pub fn train_gcn(g: &Graph, x: &Matrix, labels: &[usize], cfg: &GnnConfig) -> Result<GcnModel> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyInput("cannot train on an empty graph".into()));
    }
    if x.rows() != g.node_count() {
        return Err(Error::Dimension("feature rows do not match the graph".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= N_CLASSES) {
        return Err(Error::Config(format!("class label {bad} out of range")));
    }
    for class in 0..N_CLASSES {
        if !labels.contains(&class) {
            log::warn!("class {class} absent from the GCN training labels");
        }
    }
    let adj = g.normalized_adjacency();
    let mut model = GcnModel::init(x.cols(), cfg);
    let shapes: Vec<_> = model.params().iter().map(|m| m.shape()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    for _ in 0..cfg.epochs {
        let (loss, grads) = gcn_loss_and_gradient(&model, &adj, x, labels)?;
        model.loss_history.push(loss);
        adam.update(model.params_mut(), &grads);
    }
    Ok(model)
}
