//! Behaviour of biased walks and skip-gram embeddings.

mod oracles;

use graphscore::graph::{Graph, GraphBuilder};
use graphscore::n2v::{biased_walks, embed_snapshot, N2VConfig};
use oracles::rng;
use rand_distr::{Distribution, StandardNormal};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn unbiased_walk_steps_are_uniform_over_neighbors() {
    // node 0 sees six neighbors; some of them are linked to each other so
    // the return/in/out classes all occur
    let edges: Vec<(usize, usize, f64)> = (1..=6)
        .map(|v| (0, v, 1.0))
        .chain([(1, 2, 1.0), (3, 4, 1.0), (5, 7, 1.0), (6, 7, 1.0)])
        .collect();
    let g = Graph::from_edges(8, &edges).unwrap();
    let cfg = N2VConfig {
        walks_per_node: 400,
        walk_length: 30,
        seed: 4,
        ..Default::default()
    };
    let corpus = biased_walks(&g, &cfg).unwrap();
    let mut counts = [0usize; 8];
    for w in &corpus.walks {
        // second-order steps only: the walk already has a previous node
        for t in 1..w.len().saturating_sub(1) {
            if w[t] == 0 {
                counts[w[t + 1] as usize] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let expected = total as f64 / 6.0;
    let sigma = (total as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
    for (v, &c) in counts.iter().enumerate().skip(1).take(6) {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "neighbor {v}: {c} vs {expected:.0} ± {sigma:.0}");
    }
    assert_eq!(counts[7], 0);
}

#[test]
fn large_in_out_parameter_keeps_walks_local_on_a_path() {
    let edges: Vec<(usize, usize, f64)> = (0..19).map(|i| (i, i + 1, 1.0)).collect();
    let g = Graph::from_edges(20, &edges).unwrap();
    let outward_share = |q: f64| {
        let cfg = N2VConfig {
            q,
            walks_per_node: 20,
            walk_length: 20,
            seed: 8,
            ..Default::default()
        };
        let corpus = biased_walks(&g, &cfg).unwrap();
        let (mut out, mut all) = (0, 0);
        for w in &corpus.walks {
            for t in 1..w.len() - 1 {
                // on a path every non-return step moves to distance 2
                all += 1;
                if w[t + 1] != w[t - 1] {
                    out += 1;
                }
            }
        }
        out as f64 / all as f64
    };
    let shares: Vec<f64> = [1.0, 10.0, 100.0, 1e4].iter().map(|&q| outward_share(q)).collect();
    assert!(shares.windows(2).all(|s| s[1] < s[0]), "{shares:?}");
    assert!(shares[3] < 1e-3, "{shares:?}");
}

#[test]
fn bridged_cliques_separate_in_embedding_space() {
    let mut edges = Vec::new();
    for base in [0, 10] {
        for i in 0..10 {
            for j in i + 1..10 {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    edges.push((9, 10, 1.0));
    let g = Graph::from_edges(20, &edges).unwrap();
    for seed in 0..3 {
        let cfg = N2VConfig {
            seed,
            ..Default::default()
        };
        let z = embed_snapshot(&g, &cfg, 0).unwrap().vectors;
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for i in 0..20 {
            for j in i + 1..20 {
                let c = cosine(z.row(i), z.row(j));
                if (i < 10) == (j < 10) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter, "seed {seed}: intra {intra} inter {inter}");
    }
}

#[test]
fn single_edge_pair_is_closer_than_a_random_direction_on_average() {
    // one edge among isolated nodes, which supply the negative samples
    let g = Graph::from_edges(10, &[(0, 1, 1.0)]).unwrap();
    let (mut pair, mut random) = (0.0, 0.0);
    for seed in 0..10 {
        let cfg = N2VConfig {
            seed,
            ..Default::default()
        };
        let z = embed_snapshot(&g, &cfg, 0).unwrap().vectors;
        let mut r = rng(seed + 100);
        let direction: Vec<f64> = (0..cfg.dimensions).map(|_| StandardNormal.sample(&mut r)).collect();
        pair += cosine(z.row(0), z.row(1)) / 10.0;
        random += cosine(z.row(0), &direction) / 10.0;
    }
    assert!(pair > random, "pair {pair} random {random}");
}

#[test]
fn two_node_graph_pushes_its_pair_apart() {
    // Negatives never equal the context, so each node's only negative is
    // itself and its input vector is pulled toward the other node's output
    // vector and away from its own. With a window of one the pair ends up
    // nearly opposite.
    let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
    for seed in 0..3 {
        let cfg = N2VConfig {
            seed,
            window: 1,
            walks_per_node: 50,
            epochs: 10,
            ..Default::default()
        };
        let z = embed_snapshot(&g, &cfg, 0).unwrap().vectors;
        assert!(cosine(z.row(0), z.row(1)) < -0.9);
    }
}

#[test]
fn embeddings_follow_entities_not_insertion_order() {
    let pairs = [(10u32, 20u32), (20, 30), (30, 10), (30, 40), (40, 50), (50, 60), (60, 40), (70, 10)];
    let build = |order: &[u32]| {
        let mut b = GraphBuilder::new();
        for &e in order {
            b.add_node(e);
        }
        for &(a, c) in &pairs {
            b.add_edge(a, c, 1.0).unwrap();
        }
        b.build()
    };
    let forward = build(&[10, 20, 30, 40, 50, 60, 70]);
    let shuffled = build(&[60, 10, 70, 30, 50, 20, 40]);
    let cfg = N2VConfig {
        walks_per_node: 5,
        seed: 2,
        ..Default::default()
    };
    let za = embed_snapshot(&forward, &cfg, 0).unwrap().vectors;
    let zb = embed_snapshot(&shuffled, &cfg, 0).unwrap().vectors;
    for e in [10, 20, 30, 40, 50, 60, 70] {
        let (a, b) = (forward.local_index(e).unwrap(), shuffled.local_index(e).unwrap());
        assert_eq!(za.row(a), zb.row(b), "entity {e}");
    }
    let again = embed_snapshot(&forward, &cfg, 0).unwrap().vectors;
    assert_eq!(za, again);
}
