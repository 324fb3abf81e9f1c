//! Undirected weighted graphs, per-period snapshots and the CSV formats they
//! are ingested from.
//!
//! A [`TemporalNetwork`] owns the entity identifier space; each snapshot
//! [`Graph`] indexes its own nodes densely (`0..N`) and maps them back to
//! entity ids through [`Graph::entity`].

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Period label used when an edge-list row carries no period.
pub const STATIC_PERIOD: i64 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub weight: f64,
    /// Index into [`Graph::edges`].
    pub edge: usize,
}

/// Immutable undirected weighted graph without self-loops.
#[derive(Debug, Clone)]
pub struct Graph {
    entities: Vec<u32>,
    local: HashMap<u32, usize>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    neighbors: Vec<Neighbor>,
}

impl Graph {
    /// Graph over nodes `0..n` whose entity ids equal their indices.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_node(i as u32);
        }
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::NodeIndex {
                    index: u.max(v),
                    len: n,
                });
            }
            b.add_edge(u as u32, v as u32, w)?;
        }
        Ok(b.build())
    }

    pub fn node_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Each undirected edge once, with `u < v`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[Neighbor] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn weighted_degree(&self, v: usize) -> f64 {
        self.neighbors(v).iter().map(|n| n.weight).sum()
    }

    /// Entity id of a local node.
    pub fn entity(&self, v: usize) -> u32 {
        self.entities[v]
    }

    pub fn entities(&self) -> &[u32] {
        &self.entities
    }

    /// Local node index of an entity, if it is present in this graph.
    pub fn local_index(&self, entity: u32) -> Option<usize> {
        self.local.get(&entity).copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u)
            .binary_search_by_key(&v, |n| n.node)
            .is_ok()
    }

    /// Radius-1 neighborhood of `v`, excluding `v`.
    pub fn ego_network(&self, v: usize) -> Result<Vec<(usize, f64)>> {
        if v >= self.node_count() {
            return Err(Error::NodeIndex {
                index: v,
                len: self.node_count(),
            });
        }
        Ok(self
            .neighbors(v)
            .iter()
            .map(|n| (n.node, n.weight))
            .collect())
    }

    /// `D^{-1/2} A D^{-1/2}` with weighted degrees; isolated rows are zero.
    /// Each entry is `w / sqrt(d_u d_v)`, which keeps it in [0, 1] exactly.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let degree: Vec<f64> = (0..self.node_count()).map(|v| self.weighted_degree(v)).collect();
        let rows = (0..self.node_count())
            .map(|u| {
                self.neighbors(u)
                    .iter()
                    .map(|n| (n.node, n.weight / (degree[u] * degree[n.node]).sqrt()))
                    .collect()
            })
            .collect();
        SparseMatrix::from_rows(self.node_count(), rows)
    }
}

/// Accumulates nodes and edges; parallel edges sum their weights and
/// self-loops are rejected.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vec<u32>,
    local: HashMap<u32, usize>,
    weights: BTreeMap<(usize, usize), f64>,
    self_loops: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, entity: u32) -> usize {
        let next = self.entities.len();
        *self.local.entry(entity).or_insert_with(|| {
            self.entities.push(entity);
            next
        })
    }

    /// Adds (or reinforces) the undirected edge between two entities.
    /// Self-loops are counted and dropped.
    pub fn add_edge(&mut self, a: u32, b: u32, weight: f64) -> Result<()> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Config(format!(
                "edge weight must be positive and finite, got {weight}"
            )));
        }
        if a == b {
            self.self_loops += 1;
            return Ok(());
        }
        let u = self.add_node(a);
        let v = self.add_node(b);
        let key = (u.min(v), u.max(v));
        *self.weights.entry(key).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn self_loops(&self) -> usize {
        self.self_loops
    }

    pub fn build(self) -> Graph {
        let n = self.entities.len();
        let edges: Vec<Edge> = self
            .weights
            .into_iter()
            .map(|((u, v), weight)| Edge { u, v, weight })
            .collect();
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![
            Neighbor {
                node: 0,
                weight: 0.0,
                edge: 0
            };
            offsets[n]
        ];
        for (i, e) in edges.iter().enumerate() {
            neighbors[fill[e.u]] = Neighbor {
                node: e.v,
                weight: e.weight,
                edge: i,
            };
            fill[e.u] += 1;
            neighbors[fill[e.v]] = Neighbor {
                node: e.u,
                weight: e.weight,
                edge: i,
            };
            fill[e.v] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_by_key(|nb| nb.node);
        }
        Graph {
            entities: self.entities,
            local: self.local,
            edges,
            offsets,
            neighbors,
        }
    }
}

/// One graph per period over a shared entity identifier space.
#[derive(Debug, Clone)]
pub struct TemporalNetwork {
    entity_ids: Vec<String>,
    entity_lookup: HashMap<String, u32>,
    periods: Vec<i64>,
    snapshots: Vec<Graph>,
}

impl TemporalNetwork {
    pub fn new(
        entity_ids: Vec<String>,
        periods: Vec<i64>,
        snapshots: Vec<Graph>,
    ) -> Result<TemporalNetwork> {
        if periods.len() != snapshots.len() {
            return Err(Error::Dimension(format!(
                "{} periods for {} snapshots",
                periods.len(),
                snapshots.len()
            )));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("periods must be strictly increasing".into()));
        }
        let entity_lookup: HashMap<String, u32> = entity_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        if entity_lookup.len() != entity_ids.len() {
            return Err(Error::Config("duplicate entity identifiers".into()));
        }
        for g in &snapshots {
            if g.entities().iter().any(|&e| e as usize >= entity_ids.len()) {
                return Err(Error::Config(
                    "snapshot references an unknown entity".into(),
                ));
            }
        }
        Ok(TemporalNetwork {
            entity_ids,
            entity_lookup,
            periods,
            snapshots,
        })
    }

    /// Single-snapshot network at [`STATIC_PERIOD`].
    pub fn from_static(entity_ids: Vec<String>, graph: Graph) -> Result<TemporalNetwork> {
        TemporalNetwork::new(entity_ids, vec![STATIC_PERIOD], vec![graph])
    }

    pub fn is_static(&self) -> bool {
        self.snapshots.len() == 1
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn snapshots(&self) -> &[Graph] {
        &self.snapshots
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn entity_index(&self, id: &str) -> Option<u32> {
        self.entity_lookup.get(id).copied()
    }

    pub fn entity_name(&self, entity: u32) -> &str {
        &self.entity_ids[entity as usize]
    }

    /// Snapshot for an exact period label.
    pub fn snapshot(&self, period: i64) -> Option<&Graph> {
        self.periods
            .binary_search(&period)
            .ok()
            .map(|i| &self.snapshots[i])
    }

    /// Position of the snapshot in force at `period`.
    pub fn snapshot_index_at(&self, period: i64) -> Option<usize> {
        if self.is_static() {
            Some(0)
        } else {
            self.periods.binary_search(&period).ok()
        }
    }

    /// Snapshot in force at `period`: the exact one for temporal networks,
    /// the only one for static networks.
    pub fn snapshot_at(&self, period: i64) -> Option<&Graph> {
        if self.is_static() {
            self.snapshots.first()
        } else {
            self.snapshot(period)
        }
    }

    pub fn write_edge_list<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst", "weight", "period"])?;
        for (g, period) in self.snapshots.iter().zip(&self.periods) {
            for e in g.edges() {
                w.write_record([
                    self.entity_name(g.entity(e.u)),
                    self.entity_name(g.entity(e.v)),
                    &e.weight.to_string(),
                    &period.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<edge list>", e))?;
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_edge_list(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    pub self_loops: usize,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    src: String,
    dst: String,
    #[serde(default)]
    weight: Option<f64>,
    #[serde(default)]
    period: Option<i64>,
}

/// Reads an edge-list CSV (`src,dst[,weight][,period]`).
///
/// With `directed_hint` the rows are read as a directed listing: when both
/// directions of a pair appear in a period, the undirected weight is the
/// mean of the two directed totals instead of their sum.
pub fn load_edge_list(path: &Path, directed_hint: bool) -> Result<TemporalNetwork> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (tn, stats) = parse_edge_list(f, directed_hint, path)?;
    if stats.self_loops > 0 {
        log::warn!(
            "{}: dropped {} self-loop rows",
            path.display(),
            stats.self_loops
        );
    }
    Ok(tn)
}

pub fn parse_edge_list<R: Read>(
    input: R,
    directed_hint: bool,
    origin: &Path,
) -> Result<(TemporalNetwork, LoadStats)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    for required in ["src", "dst"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: format!("missing `{required}` column"),
            });
        }
    }
    let mut ids: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String| -> u32 {
        if let Some(&i) = lookup.get(&s) {
            return i;
        }
        let i = ids.len() as u32;
        lookup.insert(s.clone(), i);
        ids.push(s);
        i
    };
    // period -> (a, b) -> directed weight total
    let mut per_period: BTreeMap<i64, BTreeMap<(u32, u32), f64>> = BTreeMap::new();
    let mut stats = LoadStats::default();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: EdgeRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
        stats.rows += 1;
        let weight = row.weight.unwrap_or(1.0);
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("weight must be positive, got {weight}"),
            });
        }
        let a = intern(row.src);
        let b = intern(row.dst);
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        let key = if directed_hint { (a, b) } else { (a.min(b), a.max(b)) };
        *per_period
            .entry(row.period.unwrap_or(STATIC_PERIOD))
            .or_default()
            .entry(key)
            .or_insert(0.0) += weight;
    }
    if stats.rows == 0 {
        return Err(Error::EmptyInput(origin.display().to_string()));
    }
    let mut periods = Vec::new();
    let mut snapshots = Vec::new();
    for (period, directed) in per_period {
        let mut undirected: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (&(a, b), &w) in &directed {
            let key = (a.min(b), a.max(b));
            if directed_hint && directed.contains_key(&(b, a)) {
                // mirrored listing: each direction contributes half
                *undirected.entry(key).or_insert(0.0) += w / 2.0;
            } else {
                *undirected.entry(key).or_insert(0.0) += w;
            }
        }
        let mut builder = GraphBuilder::new();
        for ((a, b), w) in undirected {
            builder.add_edge(a, b, w)?;
        }
        periods.push(period);
        snapshots.push(builder.build());
    }
    Ok((TemporalNetwork::new(ids, periods, snapshots)?, stats))
}

/// Per (entity, period) numeric attributes; missing cells are NaN.
#[derive(Debug, Clone)]
pub struct NodeAttributeTable {
    names: Vec<String>,
    keys: Vec<(String, i64)>,
    values: Vec<f64>,
    index: HashMap<String, Vec<(i64, usize)>>,
}

pub const BENCH_SCORE: &str = "Bench_Score";

/// `ATT01`..`ATT13`.
pub fn borrower_attribute_names() -> Vec<String> {
    (1..=13).map(|i| format!("ATT{i:02}")).collect()
}

impl NodeAttributeTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate attribute `{n}`")));
            }
        }
        Ok(NodeAttributeTable {
            names,
            keys: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn push_row(&mut self, entity: &str, period: i64, values: &[f64]) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} attributes",
                values.len(),
                self.names.len()
            )));
        }
        if let Some(b) = self.attribute_index(BENCH_SCORE) {
            let s = values[b];
            if !s.is_nan() && !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!(
                    "{BENCH_SCORE} {s} outside [0,1] for {entity}@{period}"
                )));
            }
        }
        if self.row_index(entity, period).is_some() {
            return Err(Error::Config(format!(
                "duplicate attribute row for {entity}@{period}"
            )));
        }
        let row = self.keys.len();
        self.index
            .entry(entity.to_string())
            .or_default()
            .push((period, row));
        self.keys.push((entity.to_string(), period));
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn keys(&self) -> &[(String, i64)] {
        &self.keys
    }

    pub fn row_index(&self, entity: &str, period: i64) -> Option<usize> {
        self.index
            .get(entity)?
            .iter()
            .find(|(p, _)| *p == period)
            .map(|&(_, i)| i)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.names.len();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn get(&self, entity: &str, period: i64, attribute: usize) -> f64 {
        self.row_index(entity, period)
            .map_or(f64::NAN, |i| self.row(i)[attribute])
    }

    /// Values of one attribute for every entity of the network at `period`,
    /// indexed by entity id; absent rows are NaN.
    pub fn column_for_entities(
        &self,
        tn: &TemporalNetwork,
        period: i64,
        attribute: usize,
    ) -> Vec<f64> {
        tn.entity_ids()
            .iter()
            .map(|id| self.get(id, period, attribute))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["entity".to_string(), "period".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, (e, p)) in self.keys.iter().enumerate() {
            let mut rec = vec![e.clone(), p.to_string()];
            rec.extend(self.row(i).iter().map(|v| fmt_cell(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<attributes>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Empty string for NaN, shortest round-trip decimal otherwise.
pub(crate) fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub(crate) fn parse_cell(s: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        Ok(f64::NAN)
    } else {
        s.parse()
    }
}

/// Reads `entity,period,<attributes...>`.
pub fn load_node_attributes(path: &Path) -> Result<NodeAttributeTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_node_attributes(f, path)
}

pub fn parse_node_attributes<R: Read>(input: R, origin: &Path) -> Result<NodeAttributeTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("entity") || headers.get(1) != Some("period") {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: "header must start with `entity,period`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut table = NodeAttributeTable::new(names)?;
    let mut record = csv::StringRecord::new();
    let mut values = Vec::with_capacity(table.names().len());
    while reader.read_record(&mut record).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    })? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        if record.len() != headers.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let period: i64 = record[1]
            .parse()
            .map_err(|e| bad(format!("period: {e}")))?;
        values.clear();
        for (j, cell) in record.iter().skip(2).enumerate() {
            values.push(
                parse_cell(cell)
                    .map_err(|e| bad(format!("{}: {e}", table.names()[j])))?,
            );
        }
        table
            .push_row(&record[0], period, &values)
            .map_err(|e| bad(e.to_string()))?;
    }
    if table.is_empty() {
        return Err(Error::EmptyInput(origin.display().to_string()));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> (TemporalNetwork, LoadStats) {
        parse_edge_list(text.as_bytes(), false, Path::new("test.csv")).unwrap()
    }

    #[test]
    fn triangle_without_period_is_static() {
        let (tn, _) = parse("src,dst\na,b\nb,c\nc,a\n");
        assert!(tn.is_static());
        assert_eq!(tn.periods(), &[STATIC_PERIOD]);
        let g = &tn.snapshots()[0];
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn duplicate_rows_sum_weights() {
        let (tn, _) = parse("src,dst,weight\na,b,1\nb,a,2\n");
        let g = &tn.snapshots()[0];
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].weight, 3.0);
    }

    #[test]
    fn directed_hint_averages_mirrored_rows() {
        let text = "src,dst,weight\na,b,2\nb,a,2\nb,c,1\n";
        let (tn, _) = parse_edge_list(text.as_bytes(), true, Path::new("t")).unwrap();
        let g = &tn.snapshots()[0];
        let w: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        assert_eq!(w, vec![2.0, 1.0]);
    }

    #[test]
    fn self_loops_are_counted_and_dropped() {
        let (tn, stats) = parse("src,dst\na,a\na,b\n");
        assert_eq!(stats.self_loops, 1);
        assert_eq!(tn.snapshots()[0].edge_count(), 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_edge_list(
            "src,dst,weight\na,b,1\nb,c,zzz\n".as_bytes(),
            false,
            Path::new("t.csv"),
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = parse_edge_list("src,dst\n".as_bytes(), false, Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn periods_share_one_id_space() {
        let (tn, _) = parse("src,dst,weight,period\na,b,1,1\nb,c,1,2\nc,d,1,2\n");
        assert_eq!(tn.periods(), &[1, 2]);
        // hand-built fixture
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut g1 = GraphBuilder::new();
        g1.add_edge(0, 1, 1.0).unwrap();
        let mut g2 = GraphBuilder::new();
        g2.add_edge(1, 2, 1.0).unwrap();
        g2.add_edge(2, 3, 1.0).unwrap();
        let expected = TemporalNetwork::new(ids, vec![1, 2], vec![g1.build(), g2.build()]).unwrap();
        assert_eq!(tn.entity_ids(), expected.entity_ids());
        for (a, b) in tn.snapshots().iter().zip(expected.snapshots()) {
            assert_eq!(a.entities(), b.entities());
            assert_eq!(a.edges(), b.edges());
        }
        let b = tn.entity_index("b").unwrap();
        assert!(tn.snapshot(1).unwrap().local_index(b).is_some());
        assert!(tn.snapshot(2).unwrap().local_index(b).is_some());
    }

    #[test]
    fn normalized_adjacency_small_cases() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let a = g.normalized_adjacency();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        let t = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let a = t.normalized_adjacency();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert!((a.get(i, j) - expected).abs() < 1e-15);
            }
        }
        let iso = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        let a = iso.normalized_adjacency();
        assert_eq!(a.row(2).count(), 0);
    }

    #[test]
    fn ego_network_cases() {
        let star = Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let ego: Vec<usize> = star.ego_network(0).unwrap().iter().map(|x| x.0).collect();
        assert_eq!(ego, vec![1, 2, 3]);
        let g = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(g.ego_network(2).unwrap().is_empty());
        assert!(matches!(g.ego_network(7), Err(Error::NodeIndex { .. })));
    }

    #[test]
    fn attribute_table_parses_missing_cells() {
        let text = "entity,period,ATT01,Bench_Score\nx,1,0.5,0.2\nx,2,,0.3\n";
        let t = parse_node_attributes(text.as_bytes(), Path::new("a.csv")).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.get("x", 2, 0).is_nan());
        assert_eq!(t.get("x", 1, 1), 0.2);
        let bad = "entity,period,Bench_Score\nx,1,1.5\n";
        assert!(parse_node_attributes(bad.as_bytes(), Path::new("a.csv")).is_err());
        let dup = "entity,period,Bench_Score\nx,1,0.5\nx,1,0.4\n";
        assert!(parse_node_attributes(dup.as_bytes(), Path::new("a.csv")).is_err());
    }
}
