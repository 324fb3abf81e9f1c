//! The six pipeline stages, their on-disk artifacts and manifests.
//!
//! Each stage writes into `<out>/<stage>/` and finishes by writing
//! `manifest.json`, which records a hash of the configuration that produced
//! the stage (chained through the hashes of the stages it read) and the
//! root seed. A stage refuses to read upstream output whose recorded hash
//! differs from the one the current configuration implies.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use graphscore::eval::{render_markdown, write_fold_metrics_csv, write_report_csv};
use graphscore::explain::ImportanceReport;
use graphscore::frame::{ColumnMeta, FeatureFrame};
use graphscore::graph::{load_edge_list, load_node_attributes};
use graphscore::pipeline::{load_labels, LabeledDataset};
use graphscore::study::{
    build_features, draw_samples, explain_full_set, full_set, report_rows, select_features, train_and_evaluate,
    NamedNetwork, SelectionStage, StudyInput, TrainStage,
};
use graphscore::synth::{generate, EOW_NETWORK, FAMILY_NETWORK};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

const FAMILY_EDGES: &str = "family_edges.csv";
const EOW_EDGES: &str = "eow_edges.csv";
const ATTRIBUTES: &str = "attributes.csv";
const LABELS: &str = "labels.csv";
const FEATURES: &str = "features.csv";
const COLUMNS: &str = "columns.json";
const SAMPLES: &str = "samples.csv";
const SUMMARY: &str = "summary.json";
const CHECKPOINTS: &str = "checkpoints.json";
const SELECTION: &str = "selection.json";
const SELECTION_REPORT: &str = "selection_report.csv";
const TRAIN: &str = "train.json";
const IMPORTANCE_CSV: &str = "importance.csv";
const IMPORTANCE_JSON: &str = "importance.json";
const TREEMAP: &str = "treemap.json";
const REPORT_CSV: &str = "report.csv";
const REPORT_JSON: &str = "report.json";
const REPORT_MD: &str = "report.md";
const FOLD_METRICS: &str = "fold_metrics.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Features,
    Select,
    Train,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::Features,
        Stage::Select,
        Stage::Train,
        Stage::Explain,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Features => "features",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    pub fn dir(self, out: &Path) -> PathBuf {
        out.join(self.name())
    }

    /// Stages whose artifacts this stage reads.
    fn upstream(self, cfg: &RunConfig) -> Vec<Stage> {
        match self {
            Stage::Synth => Vec::new(),
            Stage::Features if cfg.inputs.is_some() => Vec::new(),
            Stage::Features => vec![Stage::Synth],
            Stage::Select => vec![Stage::Features],
            Stage::Train => vec![Stage::Features, Stage::Select],
            Stage::Explain => vec![Stage::Features, Stage::Select, Stage::Train],
            Stage::Report => vec![Stage::Train, Stage::Explain],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Config hashes of the stages that were read.
    pub upstream: BTreeMap<String, String>,
    /// SHA-256 of every file the stage wrote.
    pub outputs: BTreeMap<String, String>,
    pub version: String,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Manifest>> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// True when every recorded output is present with its recorded digest.
    fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(name, digest)| file_digest(&dir.join(name)).is_ok_and(|d| &d == digest))
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Hash of each stage: the config it reads plus the hashes of its
/// upstream stages. Ingested input files are hashed by content.
pub fn stage_hashes(cfg: &RunConfig) -> Result<BTreeMap<Stage, String>> {
    let study = serde_json::to_value(&cfg.study).map_err(graphscore::Error::from)?;
    let pick = |keys: &[&str]| -> serde_json::Value {
        keys.iter().map(|k| (k.to_string(), study[*k].clone())).collect()
    };
    let mut hashes: BTreeMap<Stage, String> = BTreeMap::new();
    for stage in Stage::ALL {
        let own = match stage {
            Stage::Synth => serde_json::to_value(&cfg.synth).map_err(graphscore::Error::from)?,
            Stage::Features => {
                let inputs = match &cfg.inputs {
                    Some(i) => {
                        let mut files = vec![
                            ("attributes".to_string(), file_digest(&i.attributes)?),
                            ("labels".to_string(), file_digest(&i.labels)?),
                        ];
                        for n in &i.networks {
                            files.push((format!("{}:{}", n.name, n.directed), file_digest(&n.path)?));
                        }
                        serde_json::json!(files)
                    }
                    None => serde_json::Value::Null,
                };
                serde_json::json!({
                    "inputs": inputs,
                    "study": pick(&["scenario", "target", "n2v", "gnn", "gnn_models", "pagerank", "person_network", "seed"]),
                })
            }
            Stage::Select => pick(&["selection", "cv", "seed"]),
            Stage::Train => pick(&["grid", "cv", "seed"]),
            Stage::Explain => pick(&["explain_rows"]),
            Stage::Report => pick(&["alpha"]),
        };
        let upstream: Vec<&String> = stage.upstream(cfg).iter().map(|s| &hashes[s]).collect();
        let h = digest_json(&serde_json::json!({ "stage": stage.name(), "config": own, "upstream": upstream }));
        hashes.insert(stage, h);
    }
    Ok(hashes)
}

/// Outcome of [`Runner::run_pipeline`] for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
    NotNeeded,
}

pub struct Runner<'a> {
    cfg: &'a RunConfig,
    force: bool,
    hashes: BTreeMap<Stage, String>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig, force: bool) -> Result<Self> {
        Ok(Runner {
            cfg,
            force,
            hashes: stage_hashes(cfg)?,
        })
    }

    pub fn hash(&self, stage: Stage) -> &str {
        &self.hashes[&stage]
    }

    fn dir(&self, stage: Stage) -> PathBuf {
        stage.dir(&self.cfg.out)
    }

    /// Every stage in order, skipping those whose manifest already matches
    /// the current configuration (unless forced).
    pub fn run_pipeline(&self) -> Result<Vec<(Stage, StageStatus)>> {
        let mut statuses = Vec::new();
        for stage in Stage::ALL {
            let status = if stage == Stage::Synth && self.cfg.inputs.is_some() {
                StageStatus::NotNeeded
            } else if !self.force && self.is_current(stage)? {
                log::info!("{}: up to date", stage.name());
                StageStatus::UpToDate
            } else {
                self.run(stage)?;
                StageStatus::Ran
            };
            statuses.push((stage, status));
        }
        Ok(statuses)
    }

    fn is_current(&self, stage: Stage) -> Result<bool> {
        Ok(Manifest::load(&self.dir(stage))?
            .is_some_and(|m| m.config_hash == self.hashes[&stage] && m.outputs_intact(&self.dir(stage))))
    }

    /// Checks upstream manifests, runs the stage and writes its manifest.
    pub fn run(&self, stage: Stage) -> Result<()> {
        let upstream = self.check_upstream(stage)?;
        let dir = self.dir(stage);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let manifest_path = dir.join(MANIFEST);
        if manifest_path.exists() {
            std::fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        }
        log::info!("{}: running", stage.name());
        let outputs = match stage {
            Stage::Synth => self.synth(&dir)?,
            Stage::Features => self.features(&dir)?,
            Stage::Select => self.select(&dir)?,
            Stage::Train => self.train(&dir)?,
            Stage::Explain => self.explain(&dir)?,
            Stage::Report => self.report(&dir)?,
        };
        let outputs = outputs
            .into_iter()
            .map(|name| Ok((name.to_string(), file_digest(&dir.join(name))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let manifest = Manifest {
            stage: stage.name().into(),
            config_hash: self.hashes[&stage].clone(),
            seed: self.cfg.seed,
            upstream,
            outputs,
            version: env!("CARGO_PKG_VERSION").into(),
        };
        write_json(&manifest_path, &manifest)
    }

    fn check_upstream(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut recorded = BTreeMap::new();
        for up in stage.upstream(self.cfg) {
            let manifest = Manifest::load(&self.dir(up))?.ok_or(CliError::MissingStage {
                stage: stage.name(),
                needs: up.name(),
            })?;
            let expected = &self.hashes[&up];
            if &manifest.config_hash != expected {
                if !self.force {
                    return Err(CliError::Stale {
                        upstream: up.name(),
                        recorded: manifest.config_hash,
                        expected: expected.clone(),
                    });
                }
                log::warn!("{}: using stale output of `{}` (--force)", stage.name(), up.name());
            }
            recorded.insert(up.name().to_string(), manifest.config_hash);
        }
        Ok(recorded)
    }

    fn synth(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let data = generate(&self.cfg.synth)?;
        data.write_to_dir(dir)?;
        write_json(
            &dir.join(SUMMARY),
            &serde_json::json!({
                "prevalence": data.prevalence,
                "fixed_point_iterations": data.fixed_point_iterations,
                "fixed_point_change": data.fixed_point_change,
            }),
        )?;
        Ok(vec![FAMILY_EDGES, EOW_EDGES, ATTRIBUTES, LABELS, "latent.csv", SUMMARY])
    }

    fn load_input(&self) -> Result<StudyInput> {
        let (networks, attrs, labels) = match &self.cfg.inputs {
            Some(i) => {
                let networks = i
                    .networks
                    .iter()
                    .map(|n| {
                        Ok(NamedNetwork {
                            name: n.name.clone(),
                            network: load_edge_list(&n.path, n.directed)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (networks, i.attributes.clone(), i.labels.clone())
            }
            None => {
                let d = self.dir(Stage::Synth);
                let networks = [(FAMILY_NETWORK, FAMILY_EDGES), (EOW_NETWORK, EOW_EDGES)]
                    .into_iter()
                    .map(|(name, file)| {
                        Ok(NamedNetwork {
                            name: name.into(),
                            network: load_edge_list(&d.join(file), false)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (networks, d.join(ATTRIBUTES), d.join(LABELS))
            }
        };
        Ok(StudyInput {
            networks,
            attrs: load_node_attributes(&attrs)?,
            labels: load_labels(&labels)?,
        })
    }

    fn features(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let input = self.load_input()?;
        let samples = draw_samples(&input, &self.cfg.study)?;
        log::info!(
            "{} samples ({} dropped without window, {} in default)",
            samples.keys.len(),
            samples.dropped_no_window,
            samples.dropped_in_default
        );
        let stage = build_features(&input, &samples, &self.cfg.study)?;
        let ds = &stage.dataset;
        write_with(&dir.join(FEATURES), |w| Ok(ds.features.write_csv(w)?))?;
        write_json(&dir.join(COLUMNS), &ds.features.meta())?;
        write_with(&dir.join(SAMPLES), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["entity", "period", "target"]).map_err(graphscore::Error::from)?;
            for ((e, p), &t) in ds.keys().iter().zip(&ds.y) {
                csv.write_record([e.as_str(), &p.to_string(), if t { "1" } else { "0" }])
                    .map_err(graphscore::Error::from)?;
            }
            csv.flush().map_err(|e| CliError::io(SAMPLES, e))
        })?;
        write_json(
            &dir.join(SUMMARY),
            &serde_json::json!({
                "samples": ds.len(),
                "prevalence": ds.prevalence(),
                "columns": ds.features.n_columns(),
                "dropped_no_window": samples.dropped_no_window,
                "dropped_in_default": samples.dropped_in_default,
            }),
        )?;
        write_json(&dir.join(CHECKPOINTS), &stage.checkpoints)?;
        Ok(vec![FEATURES, COLUMNS, SAMPLES, SUMMARY, CHECKPOINTS])
    }

    fn load_dataset(&self) -> Result<LabeledDataset> {
        let d = self.dir(Stage::Features);
        let meta: Vec<ColumnMeta> = read_json(&d.join(COLUMNS))?;
        let path = d.join(FEATURES);
        let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let features = FeatureFrame::read_csv(BufReader::new(file), meta, &path)?;
        let path = d.join(SAMPLES);
        let mut reader = csv::Reader::from_path(&path).map_err(graphscore::Error::from)?;
        let mut y = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(graphscore::Error::from)?;
            let key = features.keys().get(i);
            let matches = key.is_some_and(|(e, p)| rec.get(0) == Some(e) && rec.get(1) == Some(&p.to_string()));
            if !matches || rec.len() != 3 {
                return Err(CliError::Artifact {
                    path,
                    message: format!("row {} does not match {FEATURES}", i + 1),
                });
            }
            y.push(&rec[2] == "1");
        }
        if y.len() != features.n_rows() {
            return Err(CliError::Artifact {
                path,
                message: format!("{} rows but {FEATURES} has {}", y.len(), features.n_rows()),
            });
        }
        Ok(LabeledDataset {
            scenario: self.cfg.study.scenario.clone(),
            y,
            features,
        })
    }

    fn select(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let dataset = self.load_dataset()?;
        let selection = select_features(&dataset, &self.cfg.study)?;
        write_json(&dir.join(SELECTION), &selection)?;
        write_with(&dir.join(SELECTION_REPORT), |w| {
            Ok(selection.outcome.write_report_csv(w, &full_set())?)
        })?;
        Ok(vec![SELECTION, SELECTION_REPORT])
    }

    fn train(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let dataset = self.load_dataset()?;
        let selection: SelectionStage = read_json(&self.dir(Stage::Select).join(SELECTION))?;
        let train = train_and_evaluate(&dataset, &selection, &self.cfg.study)?;
        write_json(&dir.join(TRAIN), &train)?;
        Ok(vec![TRAIN])
    }

    fn explain(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let dataset = self.load_dataset()?;
        let selection: SelectionStage = read_json(&self.dir(Stage::Select).join(SELECTION))?;
        let train: TrainStage = read_json(&self.dir(Stage::Train).join(TRAIN))?;
        let importance = explain_full_set(&dataset, &selection, &train, &self.cfg.study)?;
        write_with(&dir.join(IMPORTANCE_CSV), |w| Ok(importance.write_csv(w)?))?;
        write_json(&dir.join(IMPORTANCE_JSON), &importance)?;
        write_json(&dir.join(TREEMAP), &importance.treemap())?;
        Ok(vec![IMPORTANCE_CSV, IMPORTANCE_JSON, TREEMAP])
    }

    fn report(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let train: TrainStage = read_json(&self.dir(Stage::Train).join(TRAIN))?;
        let importance: ImportanceReport = read_json(&self.dir(Stage::Explain).join(IMPORTANCE_JSON))?;
        let rows = report_rows(&train, &self.cfg.study)?;
        write_with(&dir.join(REPORT_CSV), |w| Ok(write_report_csv(&rows, w)?))?;
        write_json(&dir.join(REPORT_JSON), &rows)?;
        write_with(&dir.join(REPORT_MD), |w| {
            w.write_all(render_markdown(&rows).as_bytes())
                .map_err(|e| CliError::io(REPORT_MD, e))
        })?;
        write_with(&dir.join(FOLD_METRICS), |w| {
            Ok(write_fold_metrics_csv(&train.cv, &train.bench, w)?)
        })?;
        write_json(&dir.join(TREEMAP), &importance.treemap())?;
        Ok(vec![REPORT_CSV, REPORT_JSON, REPORT_MD, FOLD_METRICS, TREEMAP])
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(graphscore::Error::from)?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
