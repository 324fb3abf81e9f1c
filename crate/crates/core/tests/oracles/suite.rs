//! Checks shared by the integration tests and the acceptance harness. Each
//! returns a short summary of the worst deviation seen, or what went wrong.

use graphscore::explain::{base_value, tree_shap};
use graphscore::frame::FeatureGroup;
use graphscore::gnn::{gae_loss_and_gradient, gcn_layer, gcn_loss_and_gradient, GaeModel, GcnModel, GnnConfig};
use graphscore::graph::Graph;
use graphscore::linalg::Matrix;
use graphscore::metrics::{auc, ks};
use graphscore::n2v::{sgns_gradient, sgns_loss, SgnsSample};
use graphscore::netstats::{articulation_points, bridges, hits, pagerank, triads, PageRankConfig};
use graphscore::pipeline::{two_stage_selection, FeatureSetId, SelectionConfig};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_matrix(rows: usize, cols: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

/// Equivalence checks against slow references, by name.
pub const ORACLE_CHECKS: [(&str, fn() -> Outcome); 8] = [
    ("normalized adjacency vs dense construction", normalized_adjacency_dense),
    ("auc/ks vs pairwise and threshold sweep", auc_and_ks),
    ("pagerank vs long power iteration", pagerank_power_iteration),
    ("hits vs principal eigenvector", hits_eigenvector),
    ("triads vs triple enumeration", triad_enumeration),
    ("articulation points and bridges vs removal", cut_structure),
    ("gcn layer vs dense products", gcn_layer_dense),
    ("tree shap vs exhaustive shapley", shapley_enumeration),
];

/// Gradient checks, by name.
pub const GRADIENT_CHECKS: [(&str, fn() -> Outcome); 3] = [
    ("gcn", gcn_gradient),
    ("gae", gae_gradient),
    ("skip-gram", skipgram_gradient),
];

pub fn normalized_adjacency_dense() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let edges = random_edges(50, 0.1, trial % 2 == 0, &mut r);
        let g = Graph::from_edges(50, &edges).unwrap();
        let dense = dense_normalized(&dense_adjacency(50, &edges));
        let ours = g.normalized_adjacency().to_dense();
        for (i, row) in dense.iter().enumerate() {
            worst = worst.max(max_abs_diff(ours.row(i), row));
        }
    }
    ensure!(worst < 1e-12, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn pagerank_power_iteration() -> Outcome {
    let mut r = rng(2);
    let cfg = PageRankConfig {
        tol: 1e-14,
        max_iter: 10_000,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for trial in 0..3 {
        // sparse enough to leave some dangling nodes
        let edges = random_edges(100, 0.03, trial != 1, &mut r);
        let g = Graph::from_edges(100, &edges).unwrap();
        let ours = pagerank(&g, &cfg);
        ensure!(ours.converged, "pagerank did not converge");
        let oracle = dense_pagerank(&dense_adjacency(100, &edges), cfg.damping, 10_000);
        worst = worst.max(max_abs_diff(&ours.scores, &oracle));
    }
    ensure!(worst < 1e-8, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn hits_eigenvector() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for n in [10, 25, 40] {
        let edges = connected_edges(n, 0.1, &mut r);
        let g = Graph::from_edges(n, &edges).unwrap();
        let ours = hits(&g, 1e-13, 100_000);
        ensure!(ours.converged, "hits did not converge on n={n}");
        let oracle = principal_eigenvector(&dense_adjacency(n, &edges));
        worst = worst.max(max_abs_diff(&ours.authority, &oracle));
        worst = worst.max(max_abs_diff(&ours.hub, &oracle));
    }
    ensure!(worst < 1e-6, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn triad_enumeration() -> Outcome {
    let mut r = rng(4);
    for p in [0.05, 0.2, 0.5] {
        let edges = random_edges(60, p, false, &mut r);
        let g = Graph::from_edges(60, &edges).unwrap();
        ensure!(triads(&g) == brute_triads(&dense_adjacency(60, &edges)), "mismatch at p={p}");
    }
    Ok("exact on 3 graphs".into())
}

pub fn cut_structure() -> Outcome {
    let mut r = rng(5);
    for trial in 0..20 {
        let n = r.random_range(2..=200);
        // around the connectivity threshold, where cut structure is rich
        let p = (1.0 + trial as f64 / 10.0) / n as f64;
        let edges = random_edges(n, p, false, &mut r);
        let g = Graph::from_edges(n, &edges).unwrap();
        let pairs = graph_edge_pairs(&g);
        ensure!(articulation_points(&g) == brute_articulation(n, &pairs), "articulation points differ, n={n}");
        ensure!(bridges(&g) == brute_bridges(n, &pairs), "bridges differ, n={n}");
    }
    Ok("exact on 20 graphs, n <= 200".into())
}

pub fn gcn_layer_dense() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for n in [1, 7, 30, 50] {
        let edges = random_edges(n, 0.15, true, &mut r);
        let g = Graph::from_edges(n, &edges).unwrap();
        let (x, t0, t1) = (random_matrix(n, 4, &mut r), random_matrix(4, 3, &mut r), random_matrix(4, 3, &mut r));
        let ours = gcn_layer(
            &Matrix::from_rows(&x).unwrap(),
            &g,
            &Matrix::from_rows(&t0).unwrap(),
            &Matrix::from_rows(&t1).unwrap(),
        )
        .unwrap();
        let oracle = dense_gcn_layer(&dense_adjacency(n, &edges), &x, &t0, &t1);
        for (i, row) in oracle.iter().enumerate() {
            worst = worst.max(max_abs_diff(ours.row(i), row));
        }
    }
    ensure!(worst < 1e-10, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

pub fn auc_and_ks() -> Outcome {
    let mut r = rng(7);
    for n in [2, 10, 200, 1000] {
        // coarse scores force many ties
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0.0f64..10.0).floor()).collect();
        let mut labels: Vec<bool> = scores.iter().map(|s| r.random::<f64>() < 0.1 + s / 20.0).collect();
        labels[0] = true;
        labels[1] = false;
        ensure!(auc(&scores, &labels) == brute_auc(&scores, &labels), "tied auc differs, n={n}");
        ensure!(ks(&scores, &labels) == brute_ks(&scores, &labels), "tied ks differs, n={n}");
        let continuous: Vec<f64> = (0..n).map(|_| r.random()).collect();
        ensure!(auc(&continuous, &labels) == brute_auc(&continuous, &labels), "auc differs, n={n}");
        ensure!(ks(&continuous, &labels) == brute_ks(&continuous, &labels), "ks differs, n={n}");
    }
    Ok("exact, with and without ties".into())
}

pub fn shapley_enumeration() -> Outcome {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for m in 1..=6 {
        for _ in 0..5 {
            let ens = random_ensemble(m, 4, 3, &mut r);
            for _ in 0..5 {
                let row: Vec<f64> = (0..m)
                    .map(|_| if r.random::<f64>() < 0.1 { f64::NAN } else { r.random_range(-1.5..1.5) })
                    .collect();
                worst = worst.max(max_abs_diff(&tree_shap(&ens, &row), &brute_shapley(&ens, &row)));
                // the empty coalition is the base value
                let empty = (base_value(&ens) - conditional_margin(&ens, &row, 0)).abs();
                ensure!(empty < 1e-9, "base value off by {empty:.2e}");
            }
        }
    }
    ensure!(worst < 1e-6, "max deviation {worst:.2e}");
    Ok(format!("max deviation {worst:.1e}"))
}

const STEP: f64 = 1e-6;
const GRADIENT_TOLERANCE: f64 = 1e-4;

fn six_node_graph() -> Graph {
    Graph::from_edges(
        6,
        &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5), (2, 3, 1.0), (3, 4, 1.5), (4, 5, 1.0), (5, 3, 0.7)],
    )
    .unwrap()
}

fn features(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Central differences of `loss` with respect to every entry of every
/// parameter matrix exposed by `params_mut`.
fn numeric_gradient<M>(
    model: &mut M,
    params_mut: impl Fn(&mut M) -> Vec<&mut Matrix>,
    loss: impl Fn(&M) -> f64,
) -> Vec<f64> {
    let sizes: Vec<usize> = params_mut(model).iter().map(|m| m.as_slice().len()).collect();
    let mut out = Vec::new();
    for (p, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = params_mut(model)[p].as_slice()[i];
            params_mut(model)[p].as_mut_slice()[i] = orig + STEP;
            let up = loss(model);
            params_mut(model)[p].as_mut_slice()[i] = orig - STEP;
            let down = loss(model);
            params_mut(model)[p].as_mut_slice()[i] = orig;
            out.push((up - down) / (2.0 * STEP));
        }
    }
    out
}

fn flatten(grads: &[Matrix]) -> Vec<f64> {
    grads.iter().flat_map(|m| m.as_slice().to_vec()).collect()
}

fn gradient_verdict(errors: &[f64]) -> Outcome {
    let worst = errors.iter().copied().fold(0.0, f64::max);
    ensure!(worst < GRADIENT_TOLERANCE, "relative error {worst:.2e}");
    Ok(format!("relative error {worst:.1e}"))
}

pub fn gcn_gradient() -> Outcome {
    let g = six_node_graph();
    let adj = g.normalized_adjacency();
    let x = features(6, 3, 1);
    let labels = [0, 1, 2, 1, 0, 2];
    let mut errors = Vec::new();
    for tied in [false, true] {
        let cfg = GnnConfig {
            hidden: 4,
            tied,
            weight_decay: 1e-2,
            seed: 9,
            ..Default::default()
        };
        let mut model = GcnModel::init(3, &cfg);
        let (_, analytic) = gcn_loss_and_gradient(&model, &adj, &x, &labels).unwrap();
        let numeric = numeric_gradient(&mut model, GcnModel::params_mut, |m| {
            gcn_loss_and_gradient(m, &adj, &x, &labels).unwrap().0
        });
        errors.push(relative_error(&flatten(&analytic), &numeric));
    }
    gradient_verdict(&errors)
}

pub fn gae_gradient() -> Outcome {
    let g = six_node_graph();
    let adj = g.normalized_adjacency();
    let x = features(6, 2, 2);
    let positives: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
    let negatives = [(0, 4), (1, 5), (0, 3), (2, 5)];
    let mut errors = Vec::new();
    for tied in [false, true] {
        let cfg = GnnConfig {
            hidden: 4,
            embedding_dim: 3,
            tied,
            weight_decay: 1e-2,
            seed: 5,
            ..Default::default()
        };
        let mut model = GaeModel::init(2, &cfg);
        let (_, analytic) = gae_loss_and_gradient(&model, &adj, &x, &positives, &negatives).unwrap();
        let numeric = numeric_gradient(&mut model, GaeModel::params_mut, |m| {
            gae_loss_and_gradient(m, &adj, &x, &positives, &negatives).unwrap().0
        });
        errors.push(relative_error(&flatten(&analytic), &numeric));
    }
    gradient_verdict(&errors)
}

pub fn skipgram_gradient() -> Outcome {
    let (n, d) = (5, 4);
    let sample = |center, context, negatives: &[usize]| SgnsSample {
        center,
        context,
        negatives: negatives.to_vec(),
    };
    // repeated and self negatives included
    let samples = vec![sample(0, 1, &[3, 4]), sample(2, 3, &[0, 0, 4]), sample(4, 2, &[1]), sample(0, 2, &[0, 3])];
    let mut pair = (features(n, d, 3), features(n, d, 4));
    let (gi, go) = sgns_gradient(&pair.0, &pair.1, &samples);
    let numeric = numeric_gradient(
        &mut pair,
        |p| vec![&mut p.0, &mut p.1],
        |p| sgns_loss(&p.0, &p.1, &samples),
    );
    gradient_verdict(&[relative_error(&flatten(&[gi, go]), &numeric)])
}

pub struct SelectionFixture {
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub y: Vec<bool>,
}

impl SelectionFixture {
    pub fn refs(&self) -> Vec<&[f64]> {
        self.columns.iter().map(Vec::as_slice).collect()
    }
}

/// Twelve features over five groups: planted signal strengths, two
/// near-duplicate pairs, a cross-group correlated pair and pure noise.
pub fn twelve_feature_fixture(seed: u64) -> SelectionFixture {
    let mut r = rng(seed);
    let n = 600;
    let normal = |r: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(r) };
    let signal: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let shared: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let y: Vec<bool> = signal.iter().map(|s| s + 0.8 * normal(&mut r) > 1.0).collect();
    // (group, signal loading, shared loading, noise)
    let plan: [(FeatureGroup, f64, f64, f64); 12] = [
        (FeatureGroup::A, 1.0, 0.0, 0.5),
        (FeatureGroup::A, 1.0, 0.0, 0.6),
        (FeatureGroup::A, 0.3, 1.0, 1.0),
        (FeatureGroup::A, 0.0, 0.0, 1.0),
        (FeatureGroup::B, 0.8, 0.0, 0.8),
        (FeatureGroup::C, 0.5, 1.0, 0.3),
        (FeatureGroup::C, 0.5, 1.0, 0.35),
        (FeatureGroup::C, 0.02, 0.0, 1.0),
        (FeatureGroup::D, 0.9, 0.0, 0.9),
        (FeatureGroup::D, 0.9, 0.0, 1.0),
        (FeatureGroup::E, 0.4, 0.0, 1.0),
        (FeatureGroup::E, 0.3, 1.0, 0.4),
    ];
    let mut columns = Vec::new();
    let mut names = Vec::new();
    let mut groups = Vec::new();
    for (i, &(g, a, b, c)) in plan.iter().enumerate() {
        columns.push((0..n).map(|k| a * signal[k] + b * shared[k] + c * normal(&mut r)).collect());
        names.push(format!("F{i:02}_{g}"));
        groups.push(g);
    }
    SelectionFixture {
        columns,
        names,
        groups,
        y,
    }
}

/// Direct reading of the procedure: screen every feature, decorrelate
/// inside each family (A and B together), then decorrelate again for each
/// feature set.
pub fn reference_selection(fx: &SelectionFixture, cfg: &SelectionConfig) -> Vec<(String, Vec<String>)> {
    let m = fx.columns.len();
    let power: Vec<f64> = (0..m)
        .map(|i| {
            let a = brute_auc(&fx.columns[i], &fx.y);
            a.max(1.0 - a)
        })
        .collect();
    let passes: Vec<bool> = (0..m)
        .map(|i| brute_ks(&fx.columns[i], &fx.y) > cfg.ks_min && power[i] > cfg.auc_min)
        .collect();
    let greedy = |members: Vec<usize>| -> Vec<usize> {
        let mut ordered = members;
        ordered.sort_by(|&a, &b| power[b].partial_cmp(&power[a]).unwrap().then(fx.names[a].cmp(&fx.names[b])));
        let mut kept: Vec<usize> = Vec::new();
        for i in ordered {
            if kept.iter().all(|&k| pearson(&fx.columns[i], &fx.columns[k]).abs() < cfg.rho) {
                kept.push(i);
            }
        }
        kept
    };
    let families: [&[FeatureGroup]; 4] = [
        &[FeatureGroup::A, FeatureGroup::B],
        &[FeatureGroup::C],
        &[FeatureGroup::D],
        &[FeatureGroup::E],
    ];
    let mut survivors = Vec::new();
    for fam in families {
        survivors.extend(greedy((0..m).filter(|&i| passes[i] && fam.contains(&fx.groups[i])).collect()));
    }
    FeatureSetId::all()
        .into_iter()
        .map(|set| {
            let members = survivors.iter().copied().filter(|&i| set.contains(fx.groups[i])).collect();
            (set.to_string(), greedy(members).into_iter().map(|i| fx.names[i].clone()).collect())
        })
        .collect()
}

/// The selection on the twelve-feature fixture equals the reference for
/// every feature set.
pub fn selection_matches_reference(seeds: std::ops::Range<u64>) -> Outcome {
    let cfg = SelectionConfig::default();
    let n_seeds = seeds.end - seeds.start;
    for seed in seeds {
        let fx = twelve_feature_fixture(seed);
        let out = two_stage_selection(&fx.refs(), &fx.names, &fx.groups, &fx.y, &FeatureSetId::all(), &cfg)
            .map_err(|e| e.to_string())?;
        for (set, expected) in reference_selection(&fx, &cfg) {
            ensure!(out.selected[&set] == expected, "seed {seed}, set {set}: {:?} vs {expected:?}", out.selected[&set]);
        }
        // the planted near-duplicates never both survive
        let full = &out.selected["A+B+C+D+E"];
        for (a, b) in [(0, 1), (5, 6)] {
            ensure!(!(full.contains(&fx.names[a]) && full.contains(&fx.names[b])), "seed {seed}: both of a duplicate pair kept");
        }
    }
    Ok(format!("identical on {n_seeds} fixtures"))
}

/// Survivors pass both screens, stay below the correlation bound, and the
/// strongest screened feature of each set leads its list.
pub fn selection_properties(seeds: std::ops::Range<u64>) -> Outcome {
    let cfg = SelectionConfig::default();
    let mut worst_r: f64 = 0.0;
    for seed in seeds {
        let fx = twelve_feature_fixture(seed);
        let out = two_stage_selection(&fx.refs(), &fx.names, &fx.groups, &fx.y, &FeatureSetId::all(), &cfg)
            .map_err(|e| e.to_string())?;
        for set in FeatureSetId::all() {
            let chosen = out.features_for(&set);
            let idx: Vec<usize> = chosen.iter().map(|n| fx.names.iter().position(|m| m == n).unwrap()).collect();
            for (a, &i) in idx.iter().enumerate() {
                let power = brute_auc(&fx.columns[i], &fx.y);
                ensure!(power.max(1.0 - power) > cfg.auc_min, "{} below the AUC screen", fx.names[i]);
                ensure!(brute_ks(&fx.columns[i], &fx.y) > cfg.ks_min, "{} below the KS screen", fx.names[i]);
                for &j in &idx[a + 1..] {
                    let r = pearson(&fx.columns[i], &fx.columns[j]).abs();
                    worst_r = worst_r.max(r);
                    ensure!(r < cfg.rho, "{} and {} correlate at {r:.3}", fx.names[i], fx.names[j]);
                }
            }
            let best = (0..fx.names.len())
                .filter(|&i| set.contains(fx.groups[i]) && out.scores[i].passed)
                .max_by(|&a, &b| out.scores[a].auc.total_cmp(&out.scores[b].auc));
            if let Some(best) = best {
                ensure!(chosen.first() == Some(&fx.names[best]), "set {set} dropped its strongest feature");
            }
        }
    }
    Ok(format!("max surviving |r| {worst_r:.3}"))
}
