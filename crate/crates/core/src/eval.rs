//! Model evaluation: hyper-parameter search on a held-aside slice, paired
//! N-fold cross-validation over feature sets, t-tests and the
//! relative-improvement report.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::gbm::{train_gbm, GbmParams, TreeEnsemble};
use crate::metrics::{auc, ks, Metric};
use crate::n2v::mix_seed;
use crate::par;
use crate::pipeline::Imputer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub stratified: bool,
    /// Fraction of samples set aside for hyper-parameter search.
    pub hyper_fraction: f64,
    /// Fraction of the hyper slice used for fitting during the search.
    pub tuning_train_fraction: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            stratified: true,
            hyper_fraction: 0.3,
            tuning_train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Shuffled row indices, per class when stratified.
fn shuffled_by_class(rows: &[usize], y: &[bool], stratified: bool, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets = if stratified {
        vec![
            rows.iter().copied().filter(|&r| y[r]).collect::<Vec<_>>(),
            rows.iter().copied().filter(|&r| !y[r]).collect::<Vec<_>>(),
        ]
    } else {
        vec![rows.to_vec()]
    };
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }
    buckets
}

/// Splits all rows into (first, second) with `fraction` of each class in
/// the first part. Both parts are returned sorted.
pub fn split_rows(y: &[bool], fraction: f64, stratified: bool, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let rows: Vec<usize> = (0..y.len()).collect();
    split_subset(&rows, y, fraction, stratified, seed)
}

fn split_subset(rows: &[usize], y: &[bool], fraction: f64, stratified: bool, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for bucket in shuffled_by_class(rows, y, stratified, seed) {
        let k = (bucket.len() as f64 * fraction).round() as usize;
        first.extend_from_slice(&bucket[..k]);
        second.extend_from_slice(&bucket[k..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Fold label for each of `rows` (same order), dealt round-robin after a
/// seeded shuffle so fold sizes differ by at most one per class.
pub fn assign_folds(rows: &[usize], y: &[bool], k: usize, stratified: bool, seed: u64) -> Vec<usize> {
    let position: std::collections::HashMap<usize, usize> =
        rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut folds = vec![0; rows.len()];
    let mut next = 0;
    for bucket in shuffled_by_class(rows, y, stratified, seed) {
        for r in bucket {
            folds[position[&r]] = next % k;
            next += 1;
        }
    }
    folds
}

/// Grid of trees {100, 300} x depth {3, 5} x shrinkage {0.05, 0.1}, min leaf 20.
pub fn default_grid() -> Vec<GbmParams> {
    let mut grid = Vec::new();
    for n_trees in [100, 300] {
        for max_depth in [3, 5] {
            for learning_rate in [0.05, 0.1] {
                grid.push(GbmParams {
                    n_trees,
                    max_depth,
                    learning_rate,
                    min_leaf: 20,
                    ..Default::default()
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best: GbmParams,
    /// Validation AUC of every grid point, in grid order.
    pub scores: Vec<(GbmParams, f64)>,
}

/// Column-major features with the names they were selected under.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub name: String,
    pub feature_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn column_refs(&self) -> Vec<&[f64]> {
        self.columns.iter().map(Vec::as_slice).collect()
    }
}

fn fit_and_score(
    columns: &[&[f64]],
    y: &[bool],
    train: &[usize],
    test: &[usize],
    hp: &GbmParams,
) -> Result<(TreeEnsemble, Imputer, Vec<f64>)> {
    let imputer = Imputer::fit(columns, train);
    let x_train = imputer.transform(columns, train);
    let x_test = imputer.transform(columns, test);
    let y_train: Vec<bool> = train.iter().map(|&r| y[r]).collect();
    let train_refs: Vec<&[f64]> = x_train.iter().map(Vec::as_slice).collect();
    let test_refs: Vec<&[f64]> = x_test.iter().map(Vec::as_slice).collect();
    let model = train_gbm(&train_refs, &y_train, hp)?;
    let scores = model.margin(&test_refs);
    Ok((model, imputer, scores))
}

/// Grid search scored by validation AUC inside `rows` (the hyper slice).
/// Ties keep the earlier grid point.
pub fn tune_hyperparameters(
    data: &FeatureMatrix,
    y: &[bool],
    rows: &[usize],
    grid: &[GbmParams],
    cfg: &CvConfig,
) -> Result<TuningResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    let (train, valid) = split_subset(rows, y, cfg.tuning_train_fraction, cfg.stratified, mix_seed(&[cfg.seed, 0x7E5]));
    let y_valid: Vec<bool> = valid.iter().map(|&r| y[r]).collect();
    let columns = data.column_refs();
    let results = par::map(grid, |hp| -> Result<f64> {
        let (_, _, scores) = fit_and_score(&columns, y, &train, &valid, hp)?;
        Ok(auc(&scores, &y_valid))
    });
    let mut scores: Vec<(GbmParams, f64)> = Vec::with_capacity(grid.len());
    let mut best = 0;
    for (i, (hp, r)) in grid.iter().zip(results).enumerate() {
        let s = r?;
        if scores.is_empty() || s > scores[best].1 {
            best = i;
        }
        scores.push((hp.clone(), s));
    }
    Ok(TuningResult {
        best: grid[best].clone(),
        scores,
    })
}

/// A fitted fold model and the imputation statistics of its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub model: TreeEnsemble,
    pub imputer: Imputer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetResult {
    pub name: String,
    pub auc: Vec<f64>,
    pub ks: Vec<f64>,
    /// Out-of-fold margin for every cross-validation row.
    pub oof: Vec<f64>,
    #[serde(skip)]
    pub models: Vec<FoldModel>,
}

impl SetResult {
    pub fn metric(&self, m: Metric) -> &[f64] {
        match m {
            Metric::Auc => &self.auc,
            Metric::Ks => &self.ks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub seed: u64,
    pub k: usize,
    /// Cross-validation rows (dataset indices) and their folds.
    pub rows: Vec<usize>,
    pub folds: Vec<usize>,
    pub sets: Vec<SetResult>,
}

impl CvResult {
    pub fn set(&self, name: &str) -> Option<&SetResult> {
        self.sets.iter().find(|s| s.name == name)
    }

    /// Dataset rows held out in fold `f`.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        self.rows
            .iter()
            .zip(&self.folds)
            .filter(|(_, &k)| k == f)
            .map(|(&r, _)| r)
            .collect()
    }
}

/// Per-fold metrics of a raw score used directly (the benchmark row).
pub fn score_folds(name: &str, score: &[f64], y: &[bool], rows: &[usize], folds: &[usize], k: usize) -> SetResult {
    let mut res = SetResult {
        name: name.to_string(),
        auc: Vec::with_capacity(k),
        ks: Vec::with_capacity(k),
        oof: rows.iter().map(|&r| score[r]).collect(),
        models: Vec::new(),
    };
    for f in 0..k {
        let (s, t): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .zip(folds)
            .filter(|(_, &fold)| fold == f)
            .map(|(&r, _)| (score[r], y[r]))
            .unzip();
        res.auc.push(auc(&s, &t));
        res.ks.push(ks(&s, &t));
    }
    res
}

/// Trains every feature set on every fold with the same partition and
/// hyper-parameters. Missing values are imputed per training fold.
pub fn cross_validate(
    sets: &[FeatureMatrix],
    y: &[bool],
    rows: &[usize],
    cfg: &CvConfig,
    hp: &GbmParams,
    keep_models: &[bool],
) -> Result<CvResult> {
    if cfg.folds < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    let k = cfg.folds;
    let folds = assign_folds(rows, y, k, cfg.stratified, mix_seed(&[cfg.seed, 0xF01D]));
    let jobs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|s| (0..k).map(move |f| (s, f))).collect();
    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (&r, &fold) in rows.iter().zip(&folds) {
                if fold == f {
                    test.push(r);
                } else {
                    train.push(r);
                }
            }
            (train, test)
        })
        .collect();
    let outputs = par::map(&jobs, |&(s, f)| {
        let columns = sets[s].column_refs();
        let (train, test) = &fold_rows[f];
        fit_and_score(&columns, y, train, test, hp)
    });
    let position: std::collections::HashMap<usize, usize> =
        rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut results: Vec<SetResult> = sets
        .iter()
        .map(|s| SetResult {
            name: s.name.clone(),
            auc: vec![f64::NAN; k],
            ks: vec![f64::NAN; k],
            oof: vec![f64::NAN; rows.len()],
            models: Vec::new(),
        })
        .collect();
    for (&(s, f), out) in jobs.iter().zip(outputs) {
        let (model, imputer, scores) = out?;
        let test = &fold_rows[f].1;
        let labels: Vec<bool> = test.iter().map(|&r| y[r]).collect();
        results[s].auc[f] = auc(&scores, &labels);
        results[s].ks[f] = ks(&scores, &labels);
        for (&r, &m) in test.iter().zip(&scores) {
            results[s].oof[position[&r]] = m;
        }
        if keep_models.get(s).copied().unwrap_or(false) {
            results[s].models.push(FoldModel { model, imputer });
        }
    }
    Ok(CvResult {
        seed: cfg.seed,
        k,
        rows: rows.to_vec(),
        folds,
        sets: results,
    })
}

/// Paired two-sided t-test on per-fold differences `a − b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub a: String,
    pub b: String,
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub reject: bool,
    /// Differences had zero variance, so `t` is 0 or infinite.
    pub degenerate: bool,
}

pub fn paired_ttest(a_name: &str, a: &[f64], b_name: &str, b: &[f64], alpha: f64) -> Result<ComparisonVerdict> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Dimension("paired test needs two equal samples of size >= 2".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    let (t, p, degenerate) = if var <= 1e-30 {
        if mean == 0.0 {
            (0.0, 1.0, true)
        } else {
            (mean.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Config(e.to_string()))?;
        (t, 2.0 * (1.0 - dist.cdf(t.abs())), false)
    };
    Ok(ComparisonVerdict {
        a: a_name.to_string(),
        b: b_name.to_string(),
        mean_difference: mean,
        t,
        p_value: p,
        df,
        reject: p < alpha,
        degenerate,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// One cell of the relative-improvement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature_set: String,
    pub metric: String,
    /// Mean over folds of `(set − bench) / bench`.
    pub mean: f64,
    pub std: f64,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub p_value: f64,
    pub significant_vs_bench: bool,
    pub is_best: bool,
}

impl ReportRow {
    /// Table text: `*` when the difference to the benchmark is not
    /// significant, otherwise a signed percentage with its spread.
    pub fn display(&self) -> String {
        if self.significant_vs_bench {
            format!("{:+.2}% ± {:.2}%", 100.0 * self.mean, 100.0 * self.std)
        } else {
            "*".to_string()
        }
    }
}

/// Relative improvement of every set over the benchmark per metric. The
/// best set by mean metric is marked along with every set the paired test
/// cannot separate from it.
pub fn relative_improvement_table(cv: &CvResult, bench: &SetResult, alpha: f64) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        let best = cv
            .sets
            .iter()
            .max_by(|a, b| mean_sd(a.metric(metric)).0.total_cmp(&mean_sd(b.metric(metric)).0))
            .ok_or_else(|| Error::EmptyInput("no feature sets evaluated".into()))?;
        for s in &cv.sets {
            let values = s.metric(metric);
            let base = bench.metric(metric);
            let rel: Vec<f64> = values.iter().zip(base).map(|(v, b)| (v - b) / b).collect();
            let (mean, std) = mean_sd(&rel);
            let (metric_mean, metric_std) = mean_sd(values);
            let vs_bench = paired_ttest(&s.name, values, &bench.name, base, alpha)?;
            let is_best = s.name == best.name
                || !paired_ttest(&s.name, values, &best.name, best.metric(metric), alpha)?.reject;
            rows.push(ReportRow {
                feature_set: s.name.clone(),
                metric: metric.label().to_string(),
                mean,
                std,
                metric_mean,
                metric_std,
                p_value: vs_bench.p_value,
                significant_vs_bench: vs_bench.reject,
                is_best,
            });
        }
    }
    Ok(rows)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// `feature_set,metric,mean,std,significant_vs_bench,is_best`.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_set", "metric", "mean", "std", "significant_vs_bench", "is_best"])?;
    for r in rows {
        w.write_record([
            r.feature_set.clone(),
            r.metric.clone(),
            fmt6(r.mean),
            fmt6(r.std),
            r.significant_vs_bench.to_string(),
            r.is_best.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Per-fold AUC and KS of every evaluated set and the benchmark.
pub fn write_fold_metrics_csv<W: Write>(cv: &CvResult, bench: &SetResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_set", "fold", "auc", "ks"])?;
    for s in std::iter::once(bench).chain(&cv.sets) {
        for f in 0..cv.k {
            w.write_record([s.name.clone(), f.to_string(), fmt6(s.auc[f]), fmt6(s.ks[f])])?;
        }
    }
    w.flush().map_err(|e| Error::io("<fold metrics>", e))?;
    Ok(())
}

/// Markdown table with one column per metric; non-significant cells are
/// `*` and best cells are bold.
pub fn render_markdown(rows: &[ReportRow]) -> String {
    let mut sets: Vec<&str> = Vec::new();
    for r in rows {
        if !sets.contains(&r.feature_set.as_str()) {
            sets.push(&r.feature_set);
        }
    }
    let mut out = String::from("| Feature set | AUC vs BENCH | KS vs BENCH |\n|---|---|---|\n");
    for s in sets {
        let cell = |m: &str| {
            rows.iter()
                .find(|r| r.feature_set == s && r.metric == m)
                .map_or(String::new(), |r| {
                    let text = r.display().replace('*', "\\*");
                    if r.is_best {
                        format!("**{text}**")
                    } else {
                        text
                    }
                })
        };
        out.push_str(&format!("| {s} | {} | {} |\n", cell("AUC"), cell("KS")));
    }
    out
}
