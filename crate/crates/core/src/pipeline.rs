//! Dataset assembly and feature selection.
//!
//! Samples are (entity, period) pairs drawn per scoring scenario, labeled
//! with a 90+ days-past-due event inside the following horizon, and joined
//! with feature columns computed for exactly those keys. Selection is a
//! univariate AUC/KS filter followed by greedy decorrelation, run per
//! feature family and then over the union.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureFrame, FeatureGroup, Provenance};
use crate::graph::{parse_cell, NodeAttributeTable, BENCH_SCORE};
use crate::metrics::{auc, ks, Metric};
use crate::n2v::mix_seed;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRecord {
    pub period: i64,
    pub days_past_due_max: f64,
}

/// Worst days-past-due per (entity, period) plus each entity's entry period.
/// Rows exist only for periods in which the entity is in the system.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    entered: BTreeMap<String, i64>,
    history: HashMap<String, Vec<LabelRecord>>,
    first_period: Option<i64>,
    last_period: Option<i64>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entity: &str, period: i64, dpd: f64, entered_period: i64) -> Result<()> {
        if let Some(&e) = self.entered.get(entity) {
            if e != entered_period {
                return Err(Error::Config(format!(
                    "entity {entity} has conflicting entry periods {e} and {entered_period}"
                )));
            }
        }
        self.entered.insert(entity.to_string(), entered_period);
        let h = self.history.entry(entity.to_string()).or_default();
        match h.binary_search_by_key(&period, |r| r.period) {
            Ok(_) => {
                return Err(Error::Config(format!("duplicate label row for {entity}@{period}")));
            }
            Err(pos) => h.insert(
                pos,
                LabelRecord {
                    period,
                    days_past_due_max: dpd,
                },
            ),
        }
        self.first_period = Some(self.first_period.map_or(period, |p| p.min(period)));
        self.last_period = Some(self.last_period.map_or(period, |p| p.max(period)));
        Ok(())
    }

    pub fn first_period(&self) -> Option<i64> {
        self.first_period
    }

    pub fn last_period(&self) -> Option<i64> {
        self.last_period
    }

    /// Entities in id order.
    pub fn entities(&self) -> impl Iterator<Item = (&str, i64)> {
        self.entered.iter().map(|(e, &p)| (e.as_str(), p))
    }

    pub fn entered(&self, entity: &str) -> Option<i64> {
        self.entered.get(entity).copied()
    }

    pub fn history(&self, entity: &str) -> &[LabelRecord] {
        self.history.get(entity).map_or(&[], Vec::as_slice)
    }

    pub fn dpd_at(&self, entity: &str, period: i64) -> Option<f64> {
        let h = self.history(entity);
        h.binary_search_by_key(&period, |r| r.period)
            .ok()
            .map(|i| h[i].days_past_due_max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity", "period", "days_past_due_max", "entered_period"])?;
        for (e, entered) in &self.entered {
            for r in self.history(e) {
                w.write_record([
                    e.clone(),
                    r.period.to_string(),
                    r.days_past_due_max.to_string(),
                    entered.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

pub fn load_labels(path: &Path) -> Result<LabelTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(f, path)
}

/// Reads `entity,period,days_past_due_max,entered_period`.
pub fn parse_labels<R: Read>(input: R, origin: &Path) -> Result<LabelTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let expected = ["entity", "period", "days_past_due_max", "entered_period"];
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut table = LabelTable::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let period: i64 = rec[1].parse().map_err(|e| bad(format!("period: {e}")))?;
        let dpd = parse_cell(&rec[2]).map_err(|e| bad(format!("days_past_due_max: {e}")))?;
        let entered: i64 = rec[3].parse().map_err(|e| bad(format!("entered_period: {e}")))?;
        table
            .push(&rec[0], period, dpd, entered)
            .map_err(|e| bad(e.to_string()))?;
    }
    if table.entered.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no label rows", origin.display())));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    /// Periods after the observation point in which a default counts.
    pub horizon: i64,
    /// Days past due that mark a default.
    pub threshold: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            horizon: 12,
            threshold: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringKind {
    Application,
    Behavioral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityKind {
    Person,
    Business,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scoring: ScoringKind,
    pub entity_kind: EntityKind,
    /// Periods in the system before behavioral sampling starts.
    pub min_tenure: i64,
    /// Behavioral periods kept per entity, drawn at random; `None` keeps all.
    pub samples_per_entity: Option<usize>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            scoring: ScoringKind::Application,
            entity_kind: EntityKind::Person,
            min_tenure: 6,
            samples_per_entity: None,
            seed: 0,
        }
    }
}

/// Sample keys with targets and the counts of candidates that were dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub keys: Vec<(String, i64)>,
    pub y: Vec<bool>,
    /// Target window runs past the last observed period.
    pub dropped_no_window: usize,
    /// Already in default at the observation point.
    pub dropped_in_default: usize,
}

/// Draws sample keys for a scenario. The first period is never sampled: it
/// is reserved for fitting the feature-extraction models.
pub fn sample_rows(
    labels: &LabelTable,
    scenario: &ScenarioSpec,
    target: &TargetSpec,
    is_person: &dyn Fn(&str) -> bool,
) -> Result<SampleSet> {
    let (Some(first), Some(last)) = (labels.first_period(), labels.last_period()) else {
        return Err(Error::EmptyInput("label table is empty".into()));
    };
    let mut out = SampleSet::default();
    for (entity, entered) in labels.entities() {
        let person = is_person(entity);
        if person != (scenario.entity_kind == EntityKind::Person) {
            continue;
        }
        let candidates: Vec<i64> = match scenario.scoring {
            ScoringKind::Application => {
                if entered > first && labels.dpd_at(entity, entered).is_some() {
                    vec![entered]
                } else {
                    Vec::new()
                }
            }
            ScoringKind::Behavioral => labels
                .history(entity)
                .iter()
                .map(|r| r.period)
                .filter(|&p| p > first && p >= entered + scenario.min_tenure)
                .collect(),
        };
        let mut eligible = Vec::new();
        for p in candidates {
            if p + target.horizon > last {
                out.dropped_no_window += 1;
                continue;
            }
            if labels.dpd_at(entity, p).is_some_and(|d| d >= target.threshold) {
                out.dropped_in_default += 1;
                continue;
            }
            let y = labels
                .history(entity)
                .iter()
                .any(|r| r.period > p && r.period <= p + target.horizon && r.days_past_due_max >= target.threshold);
            eligible.push((p, y));
        }
        if let (ScoringKind::Behavioral, Some(k)) = (scenario.scoring, scenario.samples_per_entity) {
            if eligible.len() > k {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[scenario.seed, hash_entity(entity)]));
                let mut chosen: Vec<(i64, bool)> = eligible.choose_multiple(&mut rng, k).copied().collect();
                chosen.sort_by_key(|c| c.0);
                eligible = chosen;
            }
        }
        for (p, y) in eligible {
            out.keys.push((entity.to_string(), p));
            out.y.push(y);
        }
    }
    Ok(out)
}

fn hash_entity(s: &str) -> u64 {
    crate::gnn::hash_str(s)
}

/// Node attributes (group A) and the benchmark score (group B) at each
/// row's own period.
pub fn attribute_frame(attrs: &NodeAttributeTable, rows: &[(String, i64)]) -> Result<FeatureFrame> {
    let mut frame = FeatureFrame::new(rows.to_vec());
    let row_idx: Vec<Option<usize>> = rows.iter().map(|(e, p)| attrs.row_index(e, *p)).collect();
    for (a, name) in attrs.names().iter().enumerate() {
        let group = if name == BENCH_SCORE {
            FeatureGroup::B
        } else {
            FeatureGroup::A
        };
        let values = row_idx
            .iter()
            .map(|r| r.map_or(f64::NAN, |i| attrs.row(i)[a]))
            .collect();
        frame.push_column(name, group, Provenance::SamePeriod, values)?;
    }
    Ok(frame)
}

/// Assembled samples: keys, targets and the joined feature columns.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub scenario: ScenarioSpec,
    pub y: Vec<bool>,
    pub features: FeatureFrame,
}

impl LabeledDataset {
    pub fn keys(&self) -> &[(String, i64)] {
        self.features.keys()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn prevalence(&self) -> f64 {
        self.y.iter().filter(|&&t| t).count() as f64 / self.y.len().max(1) as f64
    }
}

/// Fails if any column draws on data later than its row's period.
pub fn audit_provenance(frame: &FeatureFrame) -> Result<()> {
    for m in frame.meta() {
        for (_, p) in frame.keys() {
            let source = m.provenance.latest_period(*p);
            if source > *p {
                return Err(Error::Leakage {
                    column: m.name.clone(),
                    row_period: *p,
                    source_period: source,
                });
            }
        }
    }
    Ok(())
}

/// Joins feature frames onto the sample keys and runs the leakage audit.
pub fn assemble_dataset(samples: &SampleSet, scenario: &ScenarioSpec, frames: &[FeatureFrame]) -> Result<LabeledDataset> {
    if samples.keys.is_empty() {
        return Err(Error::EmptyInput("no samples for this scenario".into()));
    }
    let mut features = FeatureFrame::new(samples.keys.clone());
    for f in frames {
        features.join(f)?;
    }
    audit_provenance(&features)?;
    Ok(LabeledDataset {
        scenario: scenario.clone(),
        y: samples.y.clone(),
        features,
    })
}

/// One row of the experiment grid: a set of feature families.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSetId {
    groups: Vec<FeatureGroup>,
}

impl FeatureSetId {
    pub fn new(mut groups: Vec<FeatureGroup>) -> Result<Self> {
        groups.sort();
        groups.dedup();
        if groups.is_empty() {
            return Err(Error::Config("a feature set needs at least one group".into()));
        }
        Ok(FeatureSetId { groups })
    }

    /// The eight experiment rows, in table order.
    pub fn all() -> Vec<FeatureSetId> {
        ["A", "A+B", "A+B+C", "A+B+D", "A+B+E", "A+B+C+D", "A+B+C+E", "A+B+C+D+E"]
            .iter()
            .map(|s| s.parse().expect("valid set"))
            .collect()
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn contains(&self, g: FeatureGroup) -> bool {
        self.groups.contains(&g)
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.groups.iter().map(|g| g.letter().to_string()).collect();
        write!(f, "{}", parts.join("+"))
    }
}

impl FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .split('+')
            .map(|p| {
                let mut chars = p.trim().chars();
                match (chars.next().and_then(FeatureGroup::from_letter), chars.next()) {
                    (Some(g), None) => Ok(g),
                    _ => Err(Error::Config(format!("bad feature set `{s}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureSetId::new(groups)
    }
}

impl Serialize for FeatureSetId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSetId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Correlation {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub ks_min: f64,
    pub auc_min: f64,
    pub rho: f64,
    pub order_by: Metric,
    pub correlation: Correlation,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            ks_min: 0.01,
            auc_min: 0.53,
            rho: 0.7,
            order_by: Metric::Auc,
            correlation: Correlation::Pearson,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config("rho must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.ks_min) || !(0.5..=1.0).contains(&self.auc_min) {
            return Err(Error::Config("ks_min must be in [0,1] and auc_min in [0.5,1]".into()));
        }
        Ok(())
    }
}

/// Median imputation with missing-value indicators, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub medians: Vec<f64>,
    /// Columns that get a companion `<name>_missing` indicator.
    pub indicator: Vec<bool>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl Imputer {
    /// Medians over `rows` of each column (0 when a column is all missing).
    pub fn fit(columns: &[&[f64]], rows: &[usize]) -> Imputer {
        let mut medians = Vec::with_capacity(columns.len());
        let mut indicator = Vec::with_capacity(columns.len());
        for c in columns {
            let mut seen: Vec<f64> = rows.iter().map(|&r| c[r]).filter(|v| !v.is_nan()).collect();
            indicator.push(seen.len() < rows.len());
            let m = median(&mut seen);
            medians.push(if m.is_nan() { 0.0 } else { m });
        }
        Imputer { medians, indicator }
    }

    /// Imputed values of `rows`, indicator columns appended after the
    /// originals in column order.
    pub fn transform(&self, columns: &[&[f64]], rows: &[usize]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = columns
            .iter()
            .zip(&self.medians)
            .map(|(c, &m)| {
                rows.iter()
                    .map(|&r| if c[r].is_nan() { m } else { c[r] })
                    .collect()
            })
            .collect();
        for (c, _) in columns.iter().zip(&self.indicator).filter(|(_, &ind)| ind) {
            out.push(rows.iter().map(|&r| if c[r].is_nan() { 1.0 } else { 0.0 }).collect());
        }
        out
    }

    pub fn output_names(&self, names: &[String]) -> Vec<String> {
        let mut out = names.to_vec();
        for (n, _) in names.iter().zip(&self.indicator).filter(|(_, &ind)| ind) {
            out.push(format!("{n}_missing"));
        }
        out
    }
}

/// Univariate screening result for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub name: String,
    pub group: FeatureGroup,
    /// Direction-free AUC, `max(auc, 1 − auc)`.
    pub auc: f64,
    pub ks: f64,
    pub passed: bool,
}

impl FeatureScore {
    fn power(&self, m: Metric) -> f64 {
        match m {
            Metric::Auc => self.auc,
            Metric::Ks => self.ks,
        }
    }
}

/// Keeps features with `KS > ks_min` and `AUC > auc_min`.
pub fn bivariate_filter(
    columns: &[&[f64]],
    names: &[String],
    groups: &[FeatureGroup],
    y: &[bool],
    cfg: &SelectionConfig,
) -> Vec<FeatureScore> {
    let idx: Vec<usize> = (0..columns.len()).collect();
    par::map(&idx, |&i| {
        let raw = auc(columns[i], y);
        let a = if raw.is_nan() { 0.5 } else { raw.max(1.0 - raw) };
        let k = ks(columns[i], y);
        let k = if k.is_nan() { 0.0 } else { k };
        FeatureScore {
            name: names[i].clone(),
            group: groups[i],
            auc: a,
            ks: k,
            passed: k > cfg.ks_min && a > cfg.auc_min,
        }
    })
}

/// Candidate order: predictive power descending, ties by name.
pub fn order_by_power(scores: &[FeatureScore], candidates: &[usize], metric: Metric) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        scores[b]
            .power(metric)
            .total_cmp(&scores[a].power(metric))
            .then_with(|| scores[a].name.cmp(&scores[b].name))
    });
    order
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j - 1) as f64 / 2.0 + 1.0;
        for &k in &idx[i..j] {
            r[k] = avg;
        }
        i = j;
    }
    r
}

/// Centered, unit-norm copy of a column; zero when the column is constant.
fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        centered.into_iter().map(|v| v / norm).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Pearson or Spearman correlation of two columns (0 if either is constant).
pub fn correlation(a: &[f64], b: &[f64], kind: Correlation) -> f64 {
    let (a, b) = match kind {
        Correlation::Pearson => (standardize(a), standardize(b)),
        Correlation::Spearman => (standardize(&ranks(a)), standardize(&ranks(b))),
    };
    crate::linalg::dot(&a, &b)
}

/// Walks `ordered` and keeps each feature whose |correlation| with every
/// feature kept so far is below `rho`. The first one is always kept.
pub fn greedy_decorrelate(ordered: &[usize], columns: &[&[f64]], rho: f64, kind: Correlation) -> Vec<usize> {
    let prepared: HashMap<usize, Vec<f64>> = ordered
        .iter()
        .map(|&i| {
            let v = match kind {
                Correlation::Pearson => standardize(columns[i]),
                Correlation::Spearman => standardize(&ranks(columns[i])),
            };
            (i, v)
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for &i in ordered {
        let ok = kept
            .iter()
            .all(|&j| crate::linalg::dot(&prepared[&i], &prepared[&j]).abs() < rho);
        if ok {
            kept.push(i);
        }
    }
    kept
}

/// The four families decorrelated separately in the first stage.
pub fn stage_one_block(g: FeatureGroup) -> usize {
    match g {
        FeatureGroup::A | FeatureGroup::B => 0,
        FeatureGroup::C => 1,
        FeatureGroup::D => 2,
        FeatureGroup::E => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub scores: Vec<FeatureScore>,
    pub stage1_kept: Vec<bool>,
    /// Final feature names per feature set, in selection order.
    pub selected: BTreeMap<String, Vec<String>>,
}

impl SelectionOutcome {
    pub fn features_for(&self, set: &FeatureSetId) -> &[String] {
        self.selected.get(&set.to_string()).map_or(&[], Vec::as_slice)
    }

    /// `feature,group,auc,ks,stage1_kept,stage2_kept`, with stage 2 taken
    /// from `report_set`.
    pub fn write_report_csv<W: Write>(&self, out: W, report_set: &FeatureSetId) -> Result<()> {
        let final_set: std::collections::HashSet<&str> =
            self.features_for(report_set).iter().map(String::as_str).collect();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "group", "auc", "ks", "stage1_kept", "stage2_kept"])?;
        for (s, &k1) in self.scores.iter().zip(&self.stage1_kept) {
            w.write_record([
                s.name.clone(),
                s.group.to_string(),
                format!("{:.6}", s.auc),
                format!("{:.6}", s.ks),
                k1.to_string(),
                final_set.contains(s.name.as_str()).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<selection>", e))?;
        Ok(())
    }
}

/// Filter, then decorrelate within each family, then decorrelate the
/// union of survivors for every feature set. `columns` should already be
/// imputed.
pub fn two_stage_selection(
    columns: &[&[f64]],
    names: &[String],
    groups: &[FeatureGroup],
    y: &[bool],
    sets: &[FeatureSetId],
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome> {
    cfg.validate()?;
    if columns.len() != names.len() || names.len() != groups.len() {
        return Err(Error::Dimension("columns, names and groups differ in length".into()));
    }
    let scores = bivariate_filter(columns, names, groups, y, cfg);
    let mut stage1_kept = vec![false; columns.len()];
    for block in 0..4 {
        let members: Vec<usize> = (0..columns.len())
            .filter(|&i| scores[i].passed && stage_one_block(groups[i]) == block)
            .collect();
        let ordered = order_by_power(&scores, &members, cfg.order_by);
        for i in greedy_decorrelate(&ordered, columns, cfg.rho, cfg.correlation) {
            stage1_kept[i] = true;
        }
    }
    let mut selected = BTreeMap::new();
    for set in sets {
        let members: Vec<usize> = (0..columns.len())
            .filter(|&i| stage1_kept[i] && set.contains(groups[i]))
            .collect();
        let ordered = order_by_power(&scores, &members, cfg.order_by);
        let kept = greedy_decorrelate(&ordered, columns, cfg.rho, cfg.correlation);
        selected.insert(set.to_string(), kept.into_iter().map(|i| names[i].clone()).collect());
    }
    Ok(SelectionOutcome {
        scores,
        stage1_kept,
        selected,
    })
}
