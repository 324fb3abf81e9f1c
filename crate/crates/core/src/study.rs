//! End-to-end study: samples, feature families, selection, tuning,
//! cross-validation over the eight feature sets, attribution and report.
//!
//! Each stage is a separate function so callers can persist the output of
//! one stage and resume from it later.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::egofeat::{default_spec_grid, egonet_frame};
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, default_grid, relative_improvement_table, score_folds, split_rows, tune_hyperparameters,
    CvConfig, CvResult, FeatureMatrix, FoldModel, ReportRow, SetResult, TuningResult,
};
use crate::explain::{global_importance, AttributionMatrix, ImportanceReport};
use crate::frame::FeatureGroup;
use crate::gbm::GbmParams;
use crate::gnn::{
    gnn_frame, gnn_model_grid, train_gnn_models, GnnCheckpoint, GnnConfig, CLASS_DEFAULTER, CLASS_NON_DEFAULTER,
    CLASS_UNBANKED,
};
use crate::graph::{NodeAttributeTable, TemporalNetwork, BENCH_SCORE};
use crate::n2v::{mix_seed, n2v_frame, N2VConfig};
use crate::netstats::{node_stats_frame, NetworkStats, PageRankConfig, WEIGHT_STATS};
use crate::pipeline::{
    assemble_dataset, attribute_frame, sample_rows, two_stage_selection, FeatureSetId, Imputer, LabelTable,
    LabeledDataset, SampleSet, ScenarioSpec, SelectionConfig, SelectionOutcome, TargetSpec,
};

/// Name of the benchmark row in reports.
pub const BENCH_ROW: &str = "BENCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub target: TargetSpec,
    pub selection: SelectionConfig,
    pub cv: CvConfig,
    pub n2v: N2VConfig,
    pub gnn: GnnConfig,
    /// Attributes (in table order) that get a CHEB and a GAE model each.
    pub gnn_models: usize,
    pub pagerank: PageRankConfig,
    /// Hyper-parameter grid; empty means the default grid.
    pub grid: Vec<GbmParams>,
    /// Significance level of the paired t-tests.
    pub alpha: f64,
    /// Cap on out-of-fold rows explained; 0 explains all of them.
    pub explain_rows: usize,
    /// Network whose members count as people; everything else is a business.
    pub person_network: String,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenario: ScenarioSpec::default(),
            target: TargetSpec::default(),
            selection: SelectionConfig::default(),
            cv: CvConfig::default(),
            n2v: N2VConfig {
                walks_per_node: 3,
                walk_length: 15,
                window: 3,
                epochs: 1,
                ..Default::default()
            },
            gnn: GnnConfig {
                epochs: 50,
                ..Default::default()
            },
            gnn_models: 8,
            pagerank: PageRankConfig::default(),
            grid: Vec::new(),
            alpha: 0.05,
            explain_rows: 2000,
            person_network: crate::synth::FAMILY_NETWORK.to_string(),
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.n2v.validate()?;
        self.gnn.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must be in (0,1)".into()));
        }
        if !(self.cv.hyper_fraction > 0.0 && self.cv.hyper_fraction < 1.0) {
            return Err(Error::Config("hyper_fraction must be in (0,1)".into()));
        }
        if self.target.horizon < 1 {
            return Err(Error::Config("target horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-stage configs with seeds derived from the root seed.
    fn seeded(&self) -> StudyConfig {
        let mut c = self.clone();
        c.scenario.seed = mix_seed(&[self.seed, 0x5A]);
        c.cv.seed = mix_seed(&[self.seed, 0xC7]);
        c.n2v.seed = mix_seed(&[self.seed, 0x27]);
        c.gnn.seed = mix_seed(&[self.seed, 0x6E]);
        c
    }

    fn grid(&self) -> Vec<GbmParams> {
        if self.grid.is_empty() {
            default_grid()
        } else {
            self.grid.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedNetwork {
    pub name: String,
    pub network: TemporalNetwork,
}

/// Everything the study reads: networks, node attributes and delinquency
/// histories.
#[derive(Debug, Clone)]
pub struct StudyInput {
    pub networks: Vec<NamedNetwork>,
    pub attrs: NodeAttributeTable,
    pub labels: LabelTable,
}

impl StudyInput {
    fn is_person(&self, cfg: &StudyConfig) -> Result<impl Fn(&str) -> bool + '_> {
        let net = self
            .networks
            .iter()
            .find(|n| n.name == cfg.person_network)
            .ok_or_else(|| Error::Config(format!("person network `{}` not loaded", cfg.person_network)))?;
        Ok(move |e: &str| {
            net.network
                .entity_index(e)
                .is_some_and(|i| net.network.snapshots().iter().any(|g| g.local_index(i).is_some()))
        })
    }
}

pub fn draw_samples(input: &StudyInput, cfg: &StudyConfig) -> Result<SampleSet> {
    let cfg = cfg.seeded();
    let is_person = input.is_person(&cfg)?;
    sample_rows(&input.labels, &cfg.scenario, &cfg.target, &is_person)
}

/// Assembled dataset plus the graph models fitted on the first period.
#[derive(Debug, Clone)]
pub struct FeatureStage {
    pub dataset: LabeledDataset,
    pub checkpoints: Vec<GnnCheckpoint>,
}

/// Node class at the first period for the GCN targets.
fn status_at(labels: &LabelTable, entity: &str, period: i64, threshold: f64) -> usize {
    match labels.dpd_at(entity, period) {
        None => CLASS_UNBANKED,
        Some(d) if d >= threshold => CLASS_DEFAULTER,
        Some(_) => CLASS_NON_DEFAULTER,
    }
}

/// Builds groups A–E for the sampled rows and joins them into a dataset.
pub fn build_features(input: &StudyInput, samples: &SampleSet, cfg: &StudyConfig) -> Result<FeatureStage> {
    cfg.validate()?;
    let cfg = cfg.seeded();
    let rows = &samples.keys;
    let first = input
        .labels
        .first_period()
        .ok_or_else(|| Error::EmptyInput("label table is empty".into()))?;
    let mut periods: Vec<i64> = rows.iter().map(|r| r.1).collect();
    periods.sort_unstable();
    periods.dedup();

    let mut frames = vec![attribute_frame(&input.attrs, rows)?];
    let mut ego_attributes: Vec<String> = input.attrs.names().to_vec();
    ego_attributes.sort();
    let weights: Vec<String> = WEIGHT_STATS.iter().map(|s| s.to_string()).collect();
    let specs = default_spec_grid(&ego_attributes, &weights);
    let gnn_specs = gnn_model_grid(input.attrs.names(), cfg.gnn_models);
    let class_of = |e: &str| status_at(&input.labels, e, first, cfg.target.threshold);
    let mut checkpoints = Vec::new();
    for net in &input.networks {
        let tn = &net.network;
        log::info!("features for {}", net.name);
        let stats = NetworkStats::compute(tn, &periods, &cfg.pagerank);
        frames.push(node_stats_frame(tn, &net.name, rows, &stats, true));
        frames.push(egonet_frame(tn, &net.name, &input.attrs, rows, &specs, &stats)?);
        frames.push(n2v_frame(tn, &net.name, rows, &cfg.n2v)?);
        let models = train_gnn_models(tn, &net.name, &input.attrs, &gnn_specs, first, &class_of, &cfg.gnn)?;
        frames.push(gnn_frame(tn, &net.name, &input.attrs, rows, &models)?);
        checkpoints.extend(models);
    }
    let dataset = assemble_dataset(samples, &cfg.scenario, &frames)?;
    Ok(FeatureStage { dataset, checkpoints })
}

/// The hyper-parameter slice, the cross-validation rows and the selected
/// features per set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStage {
    pub hyper_rows: Vec<usize>,
    pub cv_rows: Vec<usize>,
    pub outcome: SelectionOutcome,
}

/// Splits off the hyper-parameter slice and runs two-stage selection on it,
/// with missing values filled by the slice medians.
pub fn select_features(dataset: &LabeledDataset, cfg: &StudyConfig) -> Result<SelectionStage> {
    cfg.validate()?;
    let cfg = cfg.seeded();
    let (hyper_rows, cv_rows) = split_rows(
        &dataset.y,
        cfg.cv.hyper_fraction,
        cfg.cv.stratified,
        mix_seed(&[cfg.cv.seed, 0x5E1]),
    );
    let frame = &dataset.features;
    let candidates: Vec<usize> = (0..frame.n_columns())
        .filter(|&i| frame.meta()[i].group != FeatureGroup::B)
        .collect();
    let raw: Vec<&[f64]> = candidates.iter().map(|&i| frame.column_at(i)).collect();
    let imputed = Imputer::fit(&raw, &hyper_rows).transform(&raw, &hyper_rows);
    let refs: Vec<&[f64]> = imputed.iter().take(raw.len()).map(Vec::as_slice).collect();
    let names: Vec<String> = candidates.iter().map(|&i| frame.meta()[i].name.clone()).collect();
    let groups: Vec<FeatureGroup> = candidates.iter().map(|&i| frame.meta()[i].group).collect();
    let y: Vec<bool> = hyper_rows.iter().map(|&r| dataset.y[r]).collect();
    let mut outcome = two_stage_selection(&refs, &names, &groups, &y, &FeatureSetId::all(), &cfg.selection)?;
    // the benchmark score is always part of every set containing B
    for set in FeatureSetId::all() {
        if set.contains(FeatureGroup::B) && frame.position(BENCH_SCORE).is_some() {
            outcome
                .selected
                .get_mut(&set.to_string())
                .expect("every set selected")
                .push(BENCH_SCORE.to_string());
        }
    }
    Ok(SelectionStage {
        hyper_rows,
        cv_rows,
        outcome,
    })
}

/// Raw (unimputed) columns of a feature set.
pub fn feature_matrix(dataset: &LabeledDataset, set: &FeatureSetId, names: &[String]) -> Result<FeatureMatrix> {
    let columns = names
        .iter()
        .map(|n| {
            dataset
                .features
                .column(n)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::UnknownAttribute(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        name: set.to_string(),
        feature_names: names.to_vec(),
        columns,
    })
}

pub fn full_set() -> FeatureSetId {
    FeatureSetId::all().pop().expect("non-empty grid")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStage {
    pub tuning: TuningResult,
    pub cv: CvResult,
    pub bench: SetResult,
    /// Fold models of the full feature set, indexed by fold.
    pub full_models: Vec<FoldModel>,
}

/// Tunes on the hyper slice with the full set's features, then runs
/// cross-validation for all eight sets on the remaining rows.
pub fn train_and_evaluate(dataset: &LabeledDataset, selection: &SelectionStage, cfg: &StudyConfig) -> Result<TrainStage> {
    cfg.validate()?;
    let cfg = cfg.seeded();
    let sets = FeatureSetId::all();
    let matrices = sets
        .iter()
        .map(|s| feature_matrix(dataset, s, selection.outcome.features_for(s)))
        .collect::<Result<Vec<_>>>()?;
    let full = matrices.last().expect("eight sets");
    let tuning = tune_hyperparameters(full, &dataset.y, &selection.hyper_rows, &cfg.grid(), &cfg.cv)?;
    log::info!("tuned hyper-parameters: {:?}", tuning.best);
    let keep: Vec<bool> = (0..sets.len()).map(|i| i + 1 == sets.len()).collect();
    let mut cv = cross_validate(&matrices, &dataset.y, &selection.cv_rows, &cfg.cv, &tuning.best, &keep)?;
    let full_models = std::mem::take(&mut cv.sets.last_mut().expect("eight sets").models);
    let bench_col = dataset
        .features
        .column(BENCH_SCORE)
        .ok_or_else(|| Error::UnknownAttribute(BENCH_SCORE.into()))?;
    let bench = score_folds(BENCH_ROW, bench_col, &dataset.y, &cv.rows, &cv.folds, cv.k);
    Ok(TrainStage {
        tuning,
        cv,
        bench,
        full_models,
    })
}

pub fn report_rows(train: &TrainStage, cfg: &StudyConfig) -> Result<Vec<ReportRow>> {
    relative_improvement_table(&train.cv, &train.bench, cfg.alpha)
}

/// Attributions of the full set's fold models on their own held-out rows.
pub fn explain_full_set(
    dataset: &LabeledDataset,
    selection: &SelectionStage,
    train: &TrainStage,
    cfg: &StudyConfig,
) -> Result<ImportanceReport> {
    let set = full_set();
    let names = selection.outcome.features_for(&set);
    let matrix = feature_matrix(dataset, &set, names)?;
    let columns = matrix.column_refs();
    let k = train.cv.k;
    if train.full_models.len() != k {
        return Err(Error::Dimension(format!(
            "{} fold models for {k} folds",
            train.full_models.len()
        )));
    }
    let per_fold_cap = if cfg.explain_rows == 0 {
        usize::MAX
    } else {
        cfg.explain_rows.div_ceil(k)
    };
    let group_of: HashMap<&str, FeatureGroup> = dataset
        .features
        .meta()
        .iter()
        .map(|m| (m.name.as_str(), m.group))
        .collect();
    let mut parts = Vec::with_capacity(k);
    for (f, fm) in train.full_models.iter().enumerate() {
        let mut rows = train.cv.test_rows(f);
        rows.truncate(per_fold_cap);
        let x = fm.imputer.transform(&columns, &rows);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let fold_names = fm.imputer.output_names(names);
        parts.push(AttributionMatrix::compute(&fm.model, &fold_names, &refs)?);
    }
    // indicator columns can differ between folds: align on the union
    let attrs = align_and_concat(parts)?;
    let groups: Vec<FeatureGroup> = attrs
        .feature_names
        .iter()
        .map(|n| {
            let base = n.strip_suffix("_missing").filter(|b| group_of.contains_key(b)).unwrap_or(n);
            group_of.get(base).copied().unwrap_or(FeatureGroup::A)
        })
        .collect();
    global_importance(&attrs, &groups)
}

fn align_and_concat(parts: Vec<AttributionMatrix>) -> Result<AttributionMatrix> {
    let mut union: Vec<String> = Vec::new();
    for p in &parts {
        for n in &p.feature_names {
            if !union.contains(n) {
                union.push(n.clone());
            }
        }
    }
    let aligned = parts
        .into_iter()
        .map(|p| {
            let pos: Vec<usize> = p
                .feature_names
                .iter()
                .map(|n| union.iter().position(|u| u == n).expect("in union"))
                .collect();
            let values = p
                .values
                .iter()
                .map(|row| {
                    let mut full = vec![0.0; union.len()];
                    for (&j, &v) in pos.iter().zip(row) {
                        full[j] = v;
                    }
                    full
                })
                .collect();
            AttributionMatrix {
                feature_names: union.clone(),
                base: p.base,
                values,
            }
        })
        .collect();
    AttributionMatrix::concat(aligned)
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub samples: SampleSet,
    pub features: FeatureStage,
    pub selection: SelectionStage,
    pub train: TrainStage,
    pub report: Vec<ReportRow>,
    pub importance: ImportanceReport,
}

/// Runs every stage in memory.
pub fn run_study(input: &StudyInput, cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let samples = draw_samples(input, cfg)?;
    log::info!(
        "{} samples ({} dropped without window, {} in default)",
        samples.keys.len(),
        samples.dropped_no_window,
        samples.dropped_in_default
    );
    let features = build_features(input, &samples, cfg)?;
    let selection = select_features(&features.dataset, cfg)?;
    let train = train_and_evaluate(&features.dataset, &selection, cfg)?;
    let report = report_rows(&train, cfg)?;
    let importance = explain_full_set(&features.dataset, &selection, &train, cfg)?;
    Ok(StudyOutcome {
        samples,
        features,
        selection,
        train,
        report,
        importance,
    })
}

/// Study input from generated data: the family network and the
/// employment/ownership network.
impl From<crate::synth::SynthData> for StudyInput {
    fn from(d: crate::synth::SynthData) -> Self {
        StudyInput {
            networks: vec![
                NamedNetwork {
                    name: crate::synth::FAMILY_NETWORK.into(),
                    network: d.family,
                },
                NamedNetwork {
                    name: crate::synth::EOW_NETWORK.into(),
                    network: d.eow,
                },
            ],
            attrs: d.attrs,
            labels: d.labels,
        }
    }
}
