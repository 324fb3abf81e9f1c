//! Invariants checked over generated inputs.

mod oracles;

use std::collections::BTreeSet;
use std::path::Path;

use graphscore::egofeat::{egonet_features, Aggregation, EdgeSubset, EgoAggregationSpec, NodeValues};
use graphscore::explain::{base_value, tree_shap};
use graphscore::frame::{ColumnMeta, FeatureFrame, FeatureGroup, Provenance};
use graphscore::gnn::gcn_layer;
use graphscore::graph::{parse_edge_list, Graph, GraphBuilder, TemporalNetwork};
use graphscore::linalg::Matrix;
use graphscore::metrics::{auc, ks};
use graphscore::netstats::{bridges, pagerank, triads, PageRankConfig};
use graphscore::pipeline::{parse_labels, LabelTable};
use oracles::{dense_adjacency, random_ensemble, rng};
use proptest::prelude::*;

type EdgeList = Vec<(usize, usize, f64)>;

/// Node count plus an edge list without self-loops; parallel rows are kept
/// so the summation rule is exercised.
fn graphs(max_n: usize) -> impl Strategy<Value = (usize, EdgeList)> {
    (1..max_n).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n, 0.25f64..4.0), 0..3 * n)
            .prop_map(|es| es.into_iter().filter(|(u, v, _)| u != v).collect::<EdgeList>());
        (Just(n), edges)
    })
}

fn ego_spec(subset: EdgeSubset, aggregation: Aggregation, weight_by: Option<&str>) -> EgoAggregationSpec {
    EgoAggregationSpec {
        attribute: "x".into(),
        edge_subset: subset,
        aggregation,
        weight_by: weight_by.map(str::to_string),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pagerank_is_a_distribution_with_teleport_floor((n, edges) in graphs(60), weighted in any::<bool>(), damping in 0.5f64..0.95) {
        let g = Graph::from_edges(n, &edges).unwrap();
        let cfg = PageRankConfig { damping, weighted, ..Default::default() };
        let pr = pagerank(&g, &cfg);
        prop_assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let floor = (1.0 - damping) / n as f64;
        prop_assert!(pr.scores.iter().all(|&s| s >= floor * (1.0 - 1e-12)));
    }

    #[test]
    fn triads_degrees_and_normalization_are_consistent((n, edges) in graphs(40)) {
        let g = Graph::from_edges(n, &edges).unwrap();
        let a = dense_adjacency(n, &edges);
        let mut triangles = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if a[i][j] > 0.0 && a[j][k] > 0.0 && a[i][k] > 0.0 {
                        triangles += 1;
                    }
                }
            }
        }
        prop_assert_eq!(triads(&g).iter().sum::<u64>(), 3 * triangles);
        prop_assert_eq!((0..n).map(|v| g.degree(v)).sum::<usize>(), 2 * g.edge_count());
        let dense = g.normalized_adjacency().to_dense();
        for i in 0..n {
            for j in 0..n {
                let x = dense.row(i)[j];
                prop_assert_eq!(x, dense.row(j)[i]);
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn gcn_layer_is_permutation_equivariant((n, edges) in graphs(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut r = rng(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let moved: EdgeList = edges.iter().map(|&(u, v, w)| (perm[u], perm[v], w)).collect();
        let x = Matrix::from_vec(n, 3, (0..3 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let mut px = Matrix::zeros(n, 3);
        for i in 0..n {
            px.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let t0 = Matrix::from_vec(3, 2, (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let t1 = Matrix::from_vec(3, 2, (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let out = gcn_layer(&x, &Graph::from_edges(n, &edges).unwrap(), &t0, &t1).unwrap();
        let moved_out = gcn_layer(&px, &Graph::from_edges(n, &moved).unwrap(), &t0, &t1).unwrap();
        for i in 0..n {
            for (a, b) in out.row(i).iter().zip(moved_out.row(perm[i])) {
                // neighbor sums may run in a different order
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn auc_and_ks_ignore_monotone_transforms(raw in prop::collection::vec((0u32..50, any::<bool>()), 2..300)) {
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| f64::from(s) / 7.0).collect();
        let labels: Vec<bool> = raw.iter().map(|&(_, y)| y).collect();
        prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() * 3.0 - 10.0).collect();
        prop_assert_eq!(auc(&scores, &labels), auc(&warped, &labels));
        prop_assert_eq!(ks(&scores, &labels), ks(&warped, &labels));
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels) - (1.0 - auc(&scores, &labels))).abs() < 1e-12);
    }

    #[test]
    fn shap_is_locally_accurate_and_ignores_unused_features(seed in any::<u64>(), m in 1usize..8, trees in 1usize..6, depth in 1usize..4) {
        use rand::Rng;
        let mut r = rng(seed);
        let ens = random_ensemble(m, trees, depth, &mut r);
        // a trailing feature no tree reads
        let row: Vec<f64> = (0..=m)
            .map(|_| if r.random::<f64>() < 0.1 { f64::NAN } else { r.random_range(-1.5..1.5) })
            .collect();
        let mut wide = ens.clone();
        wide.n_features = m + 1;
        let phi = tree_shap(&wide, &row);
        prop_assert_eq!(phi.len(), m + 1);
        let total = base_value(&wide) + phi.iter().sum::<f64>();
        prop_assert!((total - wide.margin_row(&row)).abs() < 1e-9);
        prop_assert_eq!(phi[m], 0.0);
        let used = wide.used_features();
        for (j, &u) in used.iter().enumerate() {
            if !u {
                prop_assert_eq!(phi[j], 0.0);
            }
        }
    }

    #[test]
    fn ego_aggregates_decompose_over_bridge_status((n, edges) in graphs(40), c in -5.0f64..5.0, seed in any::<u64>()) {
        use rand::Rng;
        let g = Graph::from_edges(n, &edges).unwrap();
        let is_bridge = bridges(&g);
        let mut r = rng(seed);
        let mut values = NodeValues::new();
        values.insert("x", (0..n).map(|_| r.random_range(-3.0..3.0)).collect());
        values.insert("const", vec![c; n]);
        values.insert("w", (0..n).map(|_| r.random_range(0.1..2.0)).collect());
        values.insert("flat", vec![2.5; n]);
        let nodes: Vec<usize> = (0..n).collect();
        for weight in [None, Some("w")] {
            let specs: Vec<EgoAggregationSpec> = EdgeSubset::ALL
                .iter()
                .map(|&s| ego_spec(s, Aggregation::Mean, weight))
                .collect();
            let cols = egonet_features(&g, &is_bridge, &values, &specs, &nodes).unwrap();
            let wsum = |v: usize, want_bridge: bool| -> f64 {
                g.neighbors(v)
                    .iter()
                    .filter(|nb| is_bridge[nb.edge] == want_bridge)
                    .map(|nb| weight.map_or(1.0, |_| values.get("w").unwrap()[nb.node]))
                    .sum()
            };
            for v in 0..n {
                let (full, not_bridge, bridge) = (cols[0][v], cols[1][v], cols[2][v]);
                let (wn, wb) = (wsum(v, false), wsum(v, true));
                if wn + wb == 0.0 {
                    prop_assert!(full.is_nan());
                    continue;
                }
                let parts = if wn > 0.0 { wn * not_bridge } else { 0.0 } + if wb > 0.0 { wb * bridge } else { 0.0 };
                prop_assert!((full - parts / (wn + wb)).abs() < 1e-12);
            }
        }
        let constant = egonet_features(
            &g,
            &is_bridge,
            &values,
            &[
                EgoAggregationSpec { attribute: "const".into(), ..ego_spec(EdgeSubset::Full, Aggregation::Mean, Some("w")) },
                EgoAggregationSpec { attribute: "const".into(), ..ego_spec(EdgeSubset::Full, Aggregation::Std, Some("w")) },
            ],
            &nodes,
        )
        .unwrap();
        let flat = egonet_features(
            &g,
            &is_bridge,
            &values,
            &[
                ego_spec(EdgeSubset::Full, Aggregation::Mean, Some("flat")),
                ego_spec(EdgeSubset::Full, Aggregation::Std, Some("flat")),
                ego_spec(EdgeSubset::Full, Aggregation::Mean, None),
                ego_spec(EdgeSubset::Full, Aggregation::Std, None),
            ],
            &nodes,
        )
        .unwrap();
        for v in (0..n).filter(|&v| g.degree(v) > 0) {
            prop_assert!((constant[0][v] - c).abs() <= 1e-12 * (1.0 + c.abs()));
            prop_assert!(constant[1][v] <= 1e-12 * (1.0 + c.abs()));
            prop_assert!((flat[0][v] - flat[2][v]).abs() < 1e-12);
            prop_assert!((flat[1][v] - flat[3][v]).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_lists_round_trip(seed in any::<u64>(), n in 2usize..30, periods in 1usize..4) {
        use rand::Rng;
        let mut r = rng(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let mut snapshots = Vec::new();
        for _ in 0..periods {
            let mut b = GraphBuilder::new();
            for _ in 0..2 * n {
                let (u, v) = (r.random_range(0..n) as u32, r.random_range(0..n) as u32);
                if u != v {
                    b.add_edge(u, v, r.random_range(0.01..10.0)).unwrap();
                }
            }
            snapshots.push(b.build());
        }
        let tn = TemporalNetwork::new(ids, (0..periods as i64).map(|p| 201_900 + p).collect(), snapshots).unwrap();
        let mut buf = Vec::new();
        tn.write_edge_list(&mut buf).unwrap();
        let (back, stats) = parse_edge_list(buf.as_slice(), false, Path::new("mem")).unwrap();
        prop_assert_eq!(stats.self_loops, 0);
        let edge_set = |net: &TemporalNetwork, k: usize| -> BTreeSet<(String, String, u64)> {
            let g = &net.snapshots()[k];
            g.edges()
                .iter()
                .map(|e| {
                    let (a, b) = (net.entity_name(g.entity(e.u)), net.entity_name(g.entity(e.v)));
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    (a.to_string(), b.to_string(), e.weight.to_bits())
                })
                .collect()
        };
        let kept: Vec<usize> = (0..periods).filter(|&k| tn.snapshots()[k].edge_count() > 0).collect();
        prop_assert_eq!(back.periods().len(), kept.len());
        for (j, &k) in kept.iter().enumerate() {
            prop_assert_eq!(back.periods()[j], tn.periods()[k]);
            prop_assert_eq!(edge_set(&back, j), edge_set(&tn, k));
        }
    }

    #[test]
    fn label_and_frame_csv_round_trip(rows in prop::collection::vec((0u8..20, 0i64..30, prop::num::f64::NORMAL | prop::num::f64::ZERO), 1..60)) {
        let mut labels = LabelTable::new();
        let mut seen = BTreeSet::new();
        for &(e, p, d) in &rows {
            if seen.insert((e, p)) {
                labels.push(&format!("id{e}"), p, d.abs(), 0).unwrap();
            }
        }
        let mut buf = Vec::new();
        labels.write_csv(&mut buf).unwrap();
        let back = parse_labels(buf.as_slice(), Path::new("mem")).unwrap();
        for (e, entered) in labels.entities() {
            prop_assert_eq!(back.entered(e), Some(entered));
            prop_assert_eq!(back.history(e), labels.history(e));
        }

        let keys: Vec<(String, i64)> = seen.iter().map(|&(e, p)| (format!("id{e}"), p)).collect();
        let values: Vec<f64> = rows.iter().map(|r| r.2).cycle().take(keys.len()).collect();
        let mut with_gaps = values.clone();
        with_gaps[0] = f64::NAN;
        let mut frame = FeatureFrame::new(keys);
        frame.push_column("a", FeatureGroup::A, Provenance::SamePeriod, values).unwrap();
        frame.push_column("gnn", FeatureGroup::E, Provenance::TrainedAt(3), with_gaps).unwrap();
        let mut buf = Vec::new();
        frame.write_csv(&mut buf).unwrap();
        let meta: Vec<ColumnMeta> = frame.meta().to_vec();
        let back = FeatureFrame::read_csv(buf.as_slice(), meta, Path::new("mem")).unwrap();
        prop_assert_eq!(back.keys(), frame.keys());
        for c in 0..2 {
            let (a, b) = (frame.column_at(c), back.column_at(c));
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())));
        }
    }
}
