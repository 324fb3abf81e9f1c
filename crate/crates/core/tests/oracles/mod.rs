//! Slow, direct re-implementations used as references by the integration
//! tests and the acceptance harness. Nothing here calls the library's
//! algorithms; they only share its input types.
#![allow(dead_code)]

pub mod suite;

use std::collections::VecDeque;

use graphscore::gbm::{Node, Tree, TreeEnsemble};
use graphscore::graph::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type EdgeList = Vec<(usize, usize, f64)>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with weights in [0.5, 2) (or 1 when unweighted).
pub fn random_edges(n: usize, p: f64, weighted: bool, rng: &mut impl Rng) -> EdgeList {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                let w = if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
                edges.push((u, v, w));
            }
        }
    }
    edges
}

/// Connected, non-bipartite random graph: a random spanning tree, one
/// triangle, and extra edges with probability `p`.
pub fn connected_edges(n: usize, p: f64, rng: &mut impl Rng) -> EdgeList {
    assert!(n >= 3);
    let mut dense = vec![vec![0.0f64; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        dense[u][v] = rng.random_range(0.5..2.0);
    }
    dense[0][1] = dense[0][1].max(1.0);
    dense[1][2] = dense[1][2].max(1.0);
    dense[0][2] = dense[0][2].max(1.0);
    for u in 0..n {
        for v in u + 1..n {
            if dense[u][v] == 0.0 && rng.random::<f64>() < p {
                dense[u][v] = rng.random_range(0.5..2.0);
            }
        }
    }
    let mut edges = Vec::new();
    for (u, row) in dense.iter().enumerate() {
        for (v, &w) in row.iter().enumerate() {
            if w > 0.0 {
                edges.push((u, v, w));
            }
        }
    }
    edges
}

pub fn dense_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    a
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

/// `D^{-1/2} A D^{-1/2}` built entry by entry.
pub fn dense_normalized(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                out[i][j] = a[i][j] / (d[i].sqrt() * d[j].sqrt());
            }
        }
    }
    out
}

/// `X Θ₀ − Â X Θ₁` with dense products.
pub fn dense_gcn_layer(a: &[Vec<f64>], x: &[Vec<f64>], t0: &[Vec<f64>], t1: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let norm = dense_normalized(a);
    let own = matmul(x, t0);
    let nb = matmul(&matmul(&norm, x), t1);
    own.iter()
        .zip(&nb)
        .map(|(r, s)| r.iter().zip(s).map(|(p, q)| p - q).collect())
        .collect()
}

/// PageRank by dense power iteration for a fixed, large number of steps.
pub fn dense_pagerank(a: &[Vec<f64>], damping: f64, steps: usize) -> Vec<f64> {
    let n = a.len();
    let strength: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..steps {
        let dangling: f64 = (0..n).filter(|&i| strength[i] == 0.0).map(|i| x[i]).sum();
        let mut next = vec![(1.0 - damping) / n as f64 + damping * dangling / n as f64; n];
        for i in 0..n {
            if strength[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += damping * x[i] * a[i][j] / strength[i];
            }
        }
        x = next;
    }
    x
}

/// Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a = m.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Unit principal eigenvector of `A Aᵀ` with non-negative entries.
pub fn principal_eigenvector(a: &[Vec<f64>]) -> Vec<f64> {
    let at: Vec<Vec<f64>> = (0..a.len()).map(|j| a.iter().map(|r| r[j]).collect()).collect();
    let m = matmul(a, &at);
    let (vals, vecs) = jacobi_eigen(&m);
    let top = (0..vals.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let mut x: Vec<f64> = vecs.iter().map(|r| r[top]).collect();
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.into_iter().map(|v| v / norm).collect()
}

/// Triangles through each node by checking every triple.
pub fn brute_triads(a: &[Vec<f64>]) -> Vec<u64> {
    let n = a.len();
    let mut out = vec![0; n];
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if a[i][j] != 0.0 && a[j][k] != 0.0 && a[i][k] != 0.0 {
                    out[i] += 1;
                    out[j] += 1;
                    out[k] += 1;
                }
            }
        }
    }
    out
}

/// Connected components among nodes not in `removed`, ignoring `skip_edge`.
fn components(n: usize, edges: &[(usize, usize)], removed: Option<usize>, skip_edge: Option<usize>) -> usize {
    let mut adj = vec![Vec::new(); n];
    for (i, &(u, v)) in edges.iter().enumerate() {
        if Some(i) == skip_edge || Some(u) == removed || Some(v) == removed {
            continue;
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] || Some(s) == removed {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

/// A node is an articulation point when deleting it leaves more components
/// than before (not counting the node itself).
pub fn brute_articulation(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let base = components(n, edges, None, None);
    (0..n).map(|v| components(n, edges, Some(v), None) > base).collect()
}

/// An edge is a bridge when deleting it adds a component.
pub fn brute_bridges(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let base = components(n, edges, None, None);
    (0..edges.len())
        .map(|e| components(n, edges, None, Some(e)) > base)
        .collect()
}

pub fn graph_edge_pairs(g: &Graph) -> Vec<(usize, usize)> {
    g.edges().iter().map(|e| (e.u, e.v)).collect()
}

/// Fraction of (defaulter, non-defaulter) pairs ordered correctly, ties
/// counting one half.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Largest gap between the class CDFs over every observed threshold.
pub fn brute_ks(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    scores
        .iter()
        .map(|&t| {
            let pos = scores.iter().zip(labels).filter(|(s, &y)| y && **s <= t).count() as f64;
            let neg = scores.iter().zip(labels).filter(|(s, &y)| !y && **s <= t).count() as f64;
            (pos / n_pos - neg / n_neg).abs()
        })
        .fold(0.0, f64::max)
}

/// Expected tree output when only the features in `known` are observed:
/// unknown splits average their children by training cover.
fn conditional_tree_value(tree: &Tree, row: &[f64], known: u32, node: usize) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature,
            threshold,
            missing_left,
            left,
            right,
            cover,
        } => {
            if known & (1 << feature) != 0 {
                let x = row[*feature];
                let go_left = if x.is_nan() { *missing_left } else { x <= *threshold };
                conditional_tree_value(tree, row, known, if go_left { *left } else { *right })
            } else {
                let (l, r) = (&tree.nodes[*left], &tree.nodes[*right]);
                (l.cover() * conditional_tree_value(tree, row, known, *left)
                    + r.cover() * conditional_tree_value(tree, row, known, *right))
                    / cover
            }
        }
    }
}

pub fn conditional_margin(ens: &TreeEnsemble, row: &[f64], known: u32) -> f64 {
    ens.base_score
        + ens.shrinkage
            * ens
                .trees
                .iter()
                .map(|t| conditional_tree_value(t, row, known, 0))
                .sum::<f64>()
}

/// Shapley values by enumerating every coalition.
pub fn brute_shapley(ens: &TreeEnsemble, row: &[f64]) -> Vec<f64> {
    let m = ens.n_features;
    assert!(m <= 16);
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let value: Vec<f64> = (0..1u32 << m).map(|s| conditional_margin(ens, row, s)).collect();
    (0..m)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0..1u32 << m {
                if s & (1 << i) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let weight = fact(size) * fact(m - size - 1) / fact(m);
                phi += weight * (value[(s | (1 << i)) as usize] - value[s as usize]);
            }
            phi
        })
        .collect()
}

/// Random tree over `m` features with exact covers: each split divides its
/// cover into two positive parts.
pub fn random_tree(m: usize, depth: usize, rng: &mut impl Rng) -> Tree {
    fn grow(nodes: &mut Vec<Node>, m: usize, depth: usize, cover: f64, rng: &mut impl Rng) -> usize {
        let id = nodes.len();
        if depth == 0 || (depth < 3 && rng.random::<f64>() < 0.2) {
            nodes.push(Node::Leaf {
                value: rng.random_range(-1.0..1.0),
                cover,
            });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover });
        let share = rng.random_range(0.1..0.9);
        let left = grow(nodes, m, depth - 1, cover * share, rng);
        let right = grow(nodes, m, depth - 1, cover * (1.0 - share), rng);
        nodes[id] = Node::Split {
            feature: rng.random_range(0..m),
            threshold: rng.random_range(-1.0..1.0),
            missing_left: rng.random(),
            left,
            right,
            cover,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(&mut nodes, m, depth, 100.0, rng);
    Tree { nodes }
}

pub fn random_ensemble(m: usize, trees: usize, depth: usize, rng: &mut impl Rng) -> TreeEnsemble {
    TreeEnsemble {
        base_score: rng.random_range(-1.0..1.0),
        shrinkage: 0.3,
        trees: (0..trees).map(|_| random_tree(m, depth, rng)).collect(),
        n_features: m,
        train_loss: Vec::new(),
    }
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, tiny)` over flattened gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Pearson correlation from raw sums.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Γ(k/2) for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        (1..k / 2).map(|i| i as f64).product()
    } else {
        // Γ(1/2) = √π, Γ(x + 1) = x Γ(x)
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < k as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Two-sided p-value of Student's t by Simpson integration of the density.
pub fn student_t_two_sided_p(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let c = gamma_half(df + 1) / ((nu * std::f64::consts::PI).sqrt() * gamma_half(df));
    let density = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let t = t.abs();
    let steps = 200_000;
    let h = t / steps as f64;
    let mut s = density(0.0) + density(t);
    for i in 1..steps {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}
