//! Column-major feature tables keyed by (entity, period).

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{fmt_cell, parse_cell};

/// Feature families: A node attributes, B benchmark score, C node
/// statistics, D ego-network aggregations, E learned embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    A,
    B,
    C,
    D,
    E,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::A,
        FeatureGroup::B,
        FeatureGroup::C,
        FeatureGroup::D,
        FeatureGroup::E,
    ];

    pub fn letter(self) -> char {
        match self {
            FeatureGroup::A => 'A',
            FeatureGroup::B => 'B',
            FeatureGroup::C => 'C',
            FeatureGroup::D => 'D',
            FeatureGroup::E => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<FeatureGroup> {
        FeatureGroup::ALL.into_iter().find(|g| g.letter() == c)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Latest period of source data a column draws on, relative to the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Computed from data of the row's own period.
    SamePeriod,
    /// Computed from a network without time stamps.
    Static,
    /// Row-period inputs passed through a model fitted on this period.
    TrainedAt(i64),
}

impl Provenance {
    /// Latest data period used for a row observed at `row_period`.
    pub fn latest_period(self, row_period: i64) -> i64 {
        match self {
            Provenance::SamePeriod => row_period,
            Provenance::Static => i64::MIN,
            Provenance::TrainedAt(p) => p.max(row_period),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub group: FeatureGroup,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureFrame {
    keys: Vec<(String, i64)>,
    meta: Vec<ColumnMeta>,
    columns: Vec<Vec<f64>>,
}

impl FeatureFrame {
    pub fn new(keys: Vec<(String, i64)>) -> Self {
        FeatureFrame {
            keys,
            meta: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn keys(&self) -> &[(String, i64)] {
        &self.keys
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn meta(&self) -> &[ColumnMeta] {
        &self.meta
    }

    pub fn push_column(
        &mut self,
        name: &str,
        group: FeatureGroup,
        provenance: Provenance,
        values: Vec<f64>,
    ) -> Result<()> {
        if values.len() != self.keys.len() {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, frame has {}",
                values.len(),
                self.keys.len()
            )));
        }
        if self.position(name).is_some() {
            return Err(Error::Config(format!("duplicate column `{name}`")));
        }
        self.meta.push(ColumnMeta {
            name: name.to_string(),
            group,
            provenance,
        });
        self.columns.push(values);
        Ok(())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.position(name).map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> impl Iterator<Item = (&ColumnMeta, &[f64])> {
        self.meta.iter().zip(self.columns.iter().map(Vec::as_slice))
    }

    /// Appends every column of `other`, matching rows by key.
    /// Keys missing from `other` get NaN.
    pub fn join(&mut self, other: &FeatureFrame) -> Result<()> {
        let same_keys = other.keys == self.keys;
        let lookup: HashMap<(&str, i64), usize> = if same_keys {
            HashMap::new()
        } else {
            other
                .keys
                .iter()
                .enumerate()
                .map(|(i, (e, p))| ((e.as_str(), *p), i))
                .collect()
        };
        let rows: Vec<Option<usize>> = if same_keys {
            (0..self.keys.len()).map(Some).collect()
        } else {
            self.keys
                .iter()
                .map(|(e, p)| lookup.get(&(e.as_str(), *p)).copied())
                .collect()
        };
        for (m, col) in other.columns() {
            let values = rows
                .iter()
                .map(|r| r.map_or(f64::NAN, |i| col[i]))
                .collect();
            self.push_column(&m.name, m.group, m.provenance, values)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["entity".to_string(), "period".to_string()];
        header.extend(self.meta.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        for (i, (e, p)) in self.keys.iter().enumerate() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(e.clone());
            rec.push(p.to_string());
            rec.extend(self.columns.iter().map(|c| fmt_cell(c[i])));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<frame>", e))?;
        Ok(())
    }
}

impl FeatureFrame {
    /// Reads a frame written by [`FeatureFrame::write_csv`]; `meta` supplies
    /// the group and provenance of each column and must match the header.
    pub fn read_csv<R: std::io::Read>(input: R, meta: Vec<ColumnMeta>, origin: &std::path::Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let names: Vec<&str> = header.iter().skip(2).collect();
        if header.len() < 2 || &header[0] != "entity" || &header[1] != "period" {
            return Err(parse_err(1, "header must start with entity,period".into()));
        }
        if names.len() != meta.len() || names.iter().zip(&meta).any(|(n, m)| *n != m.name) {
            return Err(parse_err(1, "header does not match the column metadata".into()));
        }
        let mut keys = Vec::new();
        let mut columns = vec![Vec::new(); meta.len()];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let period = rec[1]
                .trim()
                .parse::<i64>()
                .map_err(|e| parse_err(line, format!("period: {e}")))?;
            keys.push((rec[0].to_string(), period));
            for (c, col) in columns.iter_mut().enumerate() {
                let v = parse_cell(&rec[c + 2]).map_err(|e| parse_err(line, format!("{}: {e}", meta[c].name)))?;
                col.push(v);
            }
        }
        let mut frame = FeatureFrame::new(keys);
        for (m, col) in meta.into_iter().zip(columns) {
            frame.push_column(&m.name, m.group, m.provenance, col)?;
        }
        Ok(frame)
    }
}
