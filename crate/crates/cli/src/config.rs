//! Run configuration: one TOML file plus `GS_`-prefixed environment
//! overrides, resolved into the settings every stage reads.

use std::path::{Path, PathBuf};

use graphscore::study::StudyConfig;
use graphscore::synth::{SynthConfig, EOW_NETWORK, FAMILY_NETWORK};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Prefix of environment variables that override config keys. Nested keys
/// are joined with `__`, so `GS_STUDY__CV__FOLDS=5` sets `study.cv.folds`.
pub const ENV_PREFIX: &str = "GS_";

const DEFAULT_OUT: &str = "gs-out";

/// One network file of an ingested study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkInput {
    pub name: String,
    pub path: PathBuf,
    /// Rows list each direction of an edge separately.
    #[serde(default)]
    pub directed: bool,
}

/// Input files of an ingested study. When absent the study reads the
/// output of the `synth` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub attributes: PathBuf,
    pub labels: PathBuf,
    pub networks: Vec<NetworkInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; the synthetic generator and every study stage derive
    /// their streams from it.
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub inputs: Option<InputPaths>,
    pub synth: SynthConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from(DEFAULT_OUT),
            jobs: None,
            inputs: None,
            synth: SynthConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (or the defaults), applies `GS_` variables from `env`
    /// and the command-line overrides, then validates.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &Overrides,
    ) -> Result<RunConfig> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let table: toml::Table = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for (key, raw) in env {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut table, rest, &raw)?;
            }
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(jobs) = overrides.jobs {
            cfg.jobs = Some(jobs);
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        cfg.resolve_paths(&base);
        cfg.synth.seed = cfg.seed;
        cfg.study.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(inputs) = &mut self.inputs {
            inputs.attributes = base.join(&inputs.attributes);
            inputs.labels = base.join(&inputs.labels);
            for n in &mut inputs.networks {
                n.path = base.join(&n.path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.study.validate()?;
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be >= 1".into()));
        }
        let names: Vec<&str> = match &self.inputs {
            Some(inputs) => {
                if inputs.networks.is_empty() {
                    return Err(CliError::Config("inputs.networks is empty".into()));
                }
                let files = [&inputs.attributes, &inputs.labels]
                    .into_iter()
                    .chain(inputs.networks.iter().map(|n| &n.path));
                for f in files {
                    if !f.is_file() {
                        return Err(CliError::Config(format!("input file {} does not exist", f.display())));
                    }
                }
                inputs.networks.iter().map(|n| n.name.as_str()).collect()
            }
            None => vec![FAMILY_NETWORK, EOW_NETWORK],
        };
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(CliError::Config(format!("network `{n}` listed twice")));
            }
        }
        if !names.contains(&self.study.person_network.as_str()) {
            return Err(CliError::Config(format!(
                "person_network `{}` is not one of the loaded networks {names:?}",
                self.study.person_network
            )));
        }
        Ok(())
    }
}

/// Sets `a__b__c` (case-insensitive) in `table`. The value is read as a
/// TOML literal when it parses as one and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let path: Vec<String> = key.split("__").map(str::to_ascii_lowercase).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("malformed override {ENV_PREFIX}{key}")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (leaf, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{ENV_PREFIX}{key}: `{p}` is not a table")))?;
    }
    node.insert(leaf.clone(), value);
    Ok(())
}
