//! Boosting, cross-validation and the paired comparison test.

mod oracles;

use graphscore::eval::{assign_folds, cross_validate, paired_ttest, CvConfig, FeatureMatrix};
use graphscore::gbm::{train_gbm, GbmParams};
use graphscore::metrics::auc;
use oracles::{brute_auc, rng, student_t_two_sided_p};
use rand::Rng;

fn logistic_fixture(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng(seed);
    let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let y = (0..n)
        .map(|i| {
            let z = 1.2 * cols[0][i] - 0.8 * cols[1][i] * cols[2][i] - 1.0;
            r.random::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    (cols, y)
}

#[test]
fn boosting_training_loss_never_increases_and_matches_predictions() {
    let (cols, y) = logistic_fixture(800, 50);
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    for depth in [1, 3, 5] {
        let params = GbmParams {
            n_trees: 60,
            max_depth: depth,
            min_leaf: 10,
            ..Default::default()
        };
        let model = train_gbm(&refs, &y, &params).unwrap();
        assert_eq!(model.train_loss.len(), 60);
        assert!(
            model.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "depth {depth}: {:?}",
            model.train_loss
        );
        // the recorded loss is the log-loss of the final predictions
        let p = model.predict_proba(&refs);
        let logloss = -p
            .iter()
            .zip(&y)
            .map(|(&p, &t)| if t { p.ln() } else { (1.0 - p).ln() })
            .sum::<f64>()
            / y.len() as f64;
        assert!((logloss - model.train_loss.last().unwrap()).abs() < 1e-9);
        assert!(model.trees.iter().all(|t| t.depth() <= depth));
    }
}

#[test]
fn every_feature_set_is_scored_on_the_same_folds() {
    let (cols, y) = logistic_fixture(600, 51);
    let sets = vec![
        FeatureMatrix {
            name: "narrow".into(),
            feature_names: vec!["x0".into()],
            columns: vec![cols[0].clone()],
        },
        FeatureMatrix {
            name: "wide".into(),
            feature_names: (0..4).map(|i| format!("x{i}")).collect(),
            columns: cols.clone(),
        },
        FeatureMatrix {
            name: "wide again".into(),
            feature_names: (0..4).map(|i| format!("x{i}")).collect(),
            columns: cols.clone(),
        },
    ];
    let rows: Vec<usize> = (0..600).filter(|i| i % 7 != 0).collect();
    let cfg = CvConfig {
        folds: 5,
        seed: 9,
        ..Default::default()
    };
    let params = GbmParams {
        n_trees: 30,
        ..Default::default()
    };
    let cv = cross_validate(&sets, &y, &rows, &cfg, &params, &[false, false, false]).unwrap();
    assert_eq!(cv.rows, rows);
    for set in &cv.sets {
        for f in 0..5 {
            // fold metrics are recomputed from the out-of-fold scores of the
            // shared partition
            let (s, t): (Vec<f64>, Vec<bool>) = cv
                .rows
                .iter()
                .zip(&cv.folds)
                .zip(&set.oof)
                .filter(|((_, &k), _)| k == f)
                .map(|((&r, _), &m)| (m, y[r]))
                .unzip();
            assert_eq!(set.auc[f], brute_auc(&s, &t), "{} fold {f}", set.name);
            assert_eq!(t.len(), cv.test_rows(f).len());
        }
    }
    assert_eq!(cv.sets[1].auc, cv.sets[2].auc);
    assert_eq!(cv.sets[1].oof, cv.sets[2].oof);
    assert!(cv.sets[0].oof.iter().all(|m| m.is_finite()));
}

#[test]
fn stratified_folds_balance_each_class() {
    let mut r = rng(52);
    let y: Vec<bool> = (0..503).map(|_| r.random::<f64>() < 0.13).collect();
    let rows: Vec<usize> = (0..503).collect();
    let folds = assign_folds(&rows, &y, 10, true, 4);
    for class in [true, false] {
        let mut sizes = [0usize; 10];
        for (&r, &f) in rows.iter().zip(&folds) {
            if y[r] == class {
                sizes[f] += 1;
            }
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "{sizes:?}");
    }
    assert_eq!(folds, assign_folds(&rows, &y, 10, true, 4));
}

#[test]
fn paired_ttest_matches_textbook_formula() {
    let mut r = rng(53);
    for n in [2usize, 3, 5, 10, 30] {
        for _ in 0..10 {
            let a: Vec<f64> = (0..n).map(|_| r.random_range(0.6..0.8)).collect();
            let b: Vec<f64> = a.iter().map(|x| x - r.random_range(-0.02..0.05)).collect();
            let v = paired_ttest("a", &a, "b", &b, 0.05).unwrap();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            let t = mean / (sd / (n as f64).sqrt());
            assert!((v.t - t).abs() < 1e-9 * t.abs().max(1.0));
            assert_eq!(v.df, n - 1);
            let p = student_t_two_sided_p(t, n - 1);
            assert!((v.p_value - p).abs() < 1e-6, "n={n} t={t}: {} vs {p}", v.p_value);
            assert_eq!(v.reject, v.p_value < 0.05);
        }
    }
    // identical samples cannot be told apart
    let same = paired_ttest("a", &[0.7, 0.71, 0.72], "b", &[0.7, 0.71, 0.72], 0.05).unwrap();
    assert!(same.degenerate && !same.reject && same.p_value == 1.0);
    assert!(paired_ttest("a", &[0.7], "b", &[0.6], 0.05).is_err());
}

#[test]
fn auc_is_unchanged_when_rows_are_reordered() {
    let (cols, y) = logistic_fixture(300, 54);
    let mut order: Vec<usize> = (0..300).collect();
    order.reverse();
    let s: Vec<f64> = order.iter().map(|&i| cols[0][i]).collect();
    let t: Vec<bool> = order.iter().map(|&i| y[i]).collect();
    assert_eq!(auc(&cols[0], &y), auc(&s, &t));
}
