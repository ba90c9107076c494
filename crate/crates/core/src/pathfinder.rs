//! Device calibration files and the search for the best transport paths.
//!
//! A path of `n` qubits scores the product of its `n - 1` edge weights. The
//! search is an exact branch-and-bound depth-first enumeration: a partial
//! path is abandoned once even the heaviest remaining edges could not lift
//! it above the current m-th best candidate.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::PathSpec;

/// Relative tolerance under which two readings of one edge count as equal.
const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Slack on the pruning test so that ties are never discarded.
const PRUNE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitInfo {
    pub id: u32,
    #[serde(default)]
    pub readout_err_0to1: Option<f64>,
    #[serde(default)]
    pub readout_err_1to0: Option<f64>,
    #[serde(default)]
    pub t1_us: Option<f64>,
    #[serde(default)]
    pub t2_us: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeInfo {
    pub a: u32,
    pub b: u32,
    pub gate_error: f64,
    /// Negativity of the pair state measured on this edge, unmitigated.
    #[serde(default)]
    pub neg: Option<f64>,
    /// The same with readout mitigation.
    #[serde(default)]
    pub neg_qrem: Option<f64>,
}

/// Validated device: qubits sorted by id, each undirected edge once with
/// `a < b`, edges sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub qubits: Vec<QubitInfo>,
    pub edges: Vec<EdgeInfo>,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn check_unit(loc: &str, name: &str, v: Option<f64>, max: f64) -> Result<()> {
    if let Some(x) = v {
        if !(0.0..=max).contains(&x) {
            return Err(schema(format!("{loc}.{name}"), format!("{x} outside [0, {max}]")));
        }
    }
    Ok(())
}

fn same_reading(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= DUPLICATE_TOLERANCE,
        _ => false,
    }
}

impl DeviceModel {
    /// Validates raw qubit and edge lists; reverse duplicates are merged.
    pub fn new(mut qubits: Vec<QubitInfo>, edges: Vec<EdgeInfo>) -> Result<Self> {
        for (k, q) in qubits.iter().enumerate() {
            let loc = format!("qubits[{k}]");
            check_unit(&loc, "readout_err_0to1", q.readout_err_0to1, 1.0)?;
            check_unit(&loc, "readout_err_1to0", q.readout_err_1to0, 1.0)?;
            for (name, t) in [("t1_us", q.t1_us), ("t2_us", q.t2_us)] {
                if let Some(t) = t {
                    if !(t > 0.0) {
                        return Err(schema(format!("{loc}.{name}"), format!("{t} must be positive")));
                    }
                }
            }
            if let (Some(t1), Some(t2)) = (q.t1_us, q.t2_us) {
                if t2 > 2.0 * t1 {
                    return Err(schema(loc, format!("t2 = {t2} exceeds 2 * t1 = {}", 2.0 * t1)));
                }
            }
        }
        qubits.sort_by_key(|q| q.id);
        if let Some(w) = qubits.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(schema("qubits", format!("qubit id {} repeats", w[0].id)));
        }
        let known = |id: u32| qubits.binary_search_by_key(&id, |q| q.id).is_ok();

        let mut merged: BTreeMap<(u32, u32), (usize, EdgeInfo)> = BTreeMap::new();
        for (k, e) in edges.into_iter().enumerate() {
            let loc = format!("edges[{k}]");
            if e.a == e.b {
                return Err(schema(loc, format!("self-loop on qubit {}", e.a)));
            }
            for (name, id) in [("a", e.a), ("b", e.b)] {
                if !known(id) {
                    return Err(schema(format!("{loc}.{name}"), format!("unknown qubit {id}")));
                }
            }
            check_unit(&loc, "gate_error", Some(e.gate_error), 1.0)?;
            check_unit(&loc, "neg", e.neg, 0.5)?;
            check_unit(&loc, "neg_qrem", e.neg_qrem, 0.5)?;
            let canon = EdgeInfo {
                a: e.a.min(e.b),
                b: e.a.max(e.b),
                ..e
            };
            match merged.get(&(canon.a, canon.b)) {
                Some((first, prev)) => {
                    let agree = (prev.gate_error - canon.gate_error).abs() <= DUPLICATE_TOLERANCE
                        && same_reading(prev.neg, canon.neg)
                        && same_reading(prev.neg_qrem, canon.neg_qrem);
                    if !agree {
                        return Err(schema(
                            loc,
                            format!(
                                "edge {}-{} disagrees with its duplicate edges[{first}]",
                                canon.a, canon.b
                            ),
                        ));
                    }
                }
                None => {
                    merged.insert((canon.a, canon.b), (k, canon));
                }
            }
        }
        Ok(Self {
            qubits,
            edges: merged.into_values().map(|(_, e)| e).collect(),
        })
    }

    pub fn qubit(&self, id: u32) -> Option<&QubitInfo> {
        self.qubits
            .binary_search_by_key(&id, |q| q.id)
            .ok()
            .map(|k| &self.qubits[k])
    }

    pub fn edge(&self, a: u32, b: u32) -> Option<&EdgeInfo> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.a, e.b).cmp(&key))
            .ok()
            .map(|k| &self.edges[k])
    }

    /// Every consecutive pair of `path` must be a device edge.
    pub fn check_path(&self, path: &PathSpec) -> Result<()> {
        for w in path.labels().windows(2) {
            if self.edge(w[0], w[1]).is_none() {
                return Err(Error::InvalidPath(format!(
                    "{}-{} is not a device edge",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    qubits: Vec<QubitInfo>,
    edges: Vec<EdgeInfo>,
}

/// Parses and validates calibration JSON.
pub fn parse_device(text: &str) -> Result<DeviceModel> {
    let raw: RawDevice = serde_json::from_str(text).map_err(|e| {
        schema(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    DeviceModel::new(raw.qubits, raw.edges)
}

/// Reads a calibration file.
pub fn ingest_device(path: &Path) -> Result<DeviceModel> {
    parse_device(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeightProtocol {
    #[serde(rename = "neg")]
    Neg,
    #[serde(rename = "neg-qrem")]
    NegQrem,
    #[serde(rename = "gate-fid")]
    GateFid,
}

impl WeightProtocol {
    pub const ALL: [WeightProtocol; 3] = [Self::Neg, Self::NegQrem, Self::GateFid];

    pub fn name(self) -> &'static str {
        match self {
            Self::Neg => "neg",
            Self::NegQrem => "neg-qrem",
            Self::GateFid => "gate-fid",
        }
    }
}

impl fmt::Display for WeightProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidExperiment(format!("unknown weight protocol {s:?}")))
    }
}

/// Undirected weighted graph over device qubit ids. Vertices are sorted by
/// id, so vertex order and label order agree.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingGraph {
    labels: Vec<u32>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl CouplingGraph {
    /// Builds a graph from `(a, b, weight)` triples; weights must lie in
    /// [0, 1] and the edges must be simple.
    pub fn from_edges(labels: &[u32], edges: &[(u32, u32, f64)]) -> Result<Self> {
        let mut labels = labels.to_vec();
        labels.sort_unstable();
        labels.dedup();
        let index = |id: u32| {
            labels
                .binary_search(&id)
                .map_err(|_| Error::InvalidPath(format!("unknown qubit {id}")))
        };
        let mut adjacency = vec![Vec::new(); labels.len()];
        for &(a, b, w) in edges {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidMatrix(format!("edge weight {w} outside [0, 1]")));
            }
            let (i, j) = (index(a)?, index(b)?);
            if i == j || adjacency[i].iter().any(|(k, _)| *k == j) {
                return Err(Error::InvalidPath(format!("edge {a}-{b} is not simple")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|(k, _)| *k);
        }
        Ok(Self { labels, adjacency })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f64> {
        let i = self.labels.binary_search(&a).ok()?;
        let j = self.labels.binary_search(&b).ok()?;
        self.adjacency[i].iter().find(|(k, _)| *k == j).map(|(_, w)| *w)
    }

    fn weights_descending(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |(j, _)| *j > i).map(|(_, w)| *w))
            .collect();
        w.sort_by(|a, b| b.total_cmp(a));
        w
    }
}

/// Edge weights under `protocol`. Under `GateFid` edges with error at least
/// 0.5 are left out.
pub fn edge_weights(device: &DeviceModel, protocol: WeightProtocol) -> Result<CouplingGraph> {
    let mut edges = Vec::with_capacity(device.edges.len());
    for e in &device.edges {
        let w = match protocol {
            WeightProtocol::GateFid => {
                if e.gate_error >= 0.5 {
                    continue;
                }
                1.0 - 2.0 * e.gate_error
            }
            WeightProtocol::Neg | WeightProtocol::NegQrem => {
                let v = if protocol == WeightProtocol::Neg { e.neg } else { e.neg_qrem };
                let v = v.ok_or_else(|| {
                    Error::MissingData(format!(
                        "edge {}-{} has no {} value",
                        e.a,
                        e.b,
                        if protocol == WeightProtocol::Neg { "neg" } else { "neg_qrem" }
                    ))
                })?;
                (2.0 * v).min(1.0)
            }
        };
        edges.push((e.a, e.b, w));
    }
    let labels: Vec<u32> = device.qubits.iter().map(|q| q.id).collect();
    CouplingGraph::from_edges(&labels, &edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub qubits: Vec<u32>,
    pub weight_product: f64,
    pub protocol: Option<WeightProtocol>,
}

impl WeightedPath {
    pub fn spec(&self) -> Result<PathSpec> {
        PathSpec::new(self.qubits.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSearch {
    /// Best paths, heaviest first; equal weights in lexicographic order.
    pub paths: Vec<WeightedPath>,
    /// Fewer than the requested number of paths exist.
    pub fewer_than_requested: bool,
}

/// Product of edge weights along `labels`, multiplied in path order.
pub fn path_product(graph: &CouplingGraph, labels: &[u32]) -> Option<f64> {
    labels
        .windows(2)
        .try_fold(1.0, |acc, w| graph.weight(w[0], w[1]).map(|x| acc * x))
}

#[derive(Clone, Debug)]
struct Candidate {
    score: f64,
    qubits: Vec<u32>,
}

/// Total order: better score first, then lexicographically smaller path.
fn rank(a: &Candidate, b: &Candidate, higher_is_better: bool) -> Ordering {
    let by_score = if higher_is_better {
        b.score.total_cmp(&a.score)
    } else {
        a.score.total_cmp(&b.score)
    };
    by_score.then_with(|| a.qubits.cmp(&b.qubits))
}

/// Scoring rules shared by the product and log-cost searches.
trait Objective: Sync {
    const HIGHER_IS_BETTER: bool;
    fn start(&self) -> f64;
    fn extend(&self, score: f64, weight: f64) -> f64;
    /// Best score reachable by adding `edges_left` more edges.
    fn bound(&self, score: f64, edges_left: usize) -> f64;
    /// Whether a partial path at bound `bound` may still beat `worst`.
    fn viable(&self, bound: f64, worst: f64) -> bool;
}

struct Product {
    /// `prefix[k]`: product of the `k` heaviest edge weights.
    prefix: Vec<f64>,
}

impl Objective for Product {
    const HIGHER_IS_BETTER: bool = true;
    fn start(&self) -> f64 {
        1.0
    }
    fn extend(&self, score: f64, weight: f64) -> f64 {
        score * weight
    }
    fn bound(&self, score: f64, edges_left: usize) -> f64 {
        score * self.prefix[edges_left.min(self.prefix.len() - 1)]
    }
    fn viable(&self, bound: f64, worst: f64) -> bool {
        bound >= worst * (1.0 - PRUNE_SLACK)
    }
}

struct LogCost {
    /// `prefix[k]`: sum of the `k` smallest edge costs `-ln w`.
    prefix: Vec<f64>,
}

impl Objective for LogCost {
    const HIGHER_IS_BETTER: bool = false;
    fn start(&self) -> f64 {
        0.0
    }
    fn extend(&self, score: f64, weight: f64) -> f64 {
        score - weight.ln()
    }
    fn bound(&self, score: f64, edges_left: usize) -> f64 {
        score + self.prefix[edges_left.min(self.prefix.len() - 1)]
    }
    fn viable(&self, bound: f64, worst: f64) -> bool {
        bound <= worst + PRUNE_SLACK * (1.0 + worst.abs())
    }
}

struct Best {
    m: usize,
    higher_is_better: bool,
    items: Vec<Candidate>,
}

impl Best {
    fn worst(&self) -> Option<f64> {
        (self.items.len() == self.m).then(|| self.items[self.m - 1].score)
    }

    fn offer(&mut self, c: Candidate) {
        let pos = self
            .items
            .binary_search_by(|x| rank(x, &c, self.higher_is_better))
            .unwrap_or_else(|p| p);
        if pos < self.m {
            self.items.insert(pos, c);
            self.items.truncate(self.m);
        }
    }
}

struct Dfs<'a, O: Objective> {
    graph: &'a CouplingGraph,
    objective: &'a O,
    n: usize,
    visited: Vec<bool>,
    stack: Vec<usize>,
    best: Best,
}

impl<O: Objective> Dfs<'_, O> {
    fn walk(&mut self, score: f64) {
        let v = *self.stack.last().expect("non-empty stack");
        if self.stack.len() == self.n {
            let (first, last) = (self.stack[0], v);
            if first < last {
                let qubits: Vec<u32> = self.stack.iter().map(|&i| self.graph.labels[i]).collect();
                // rescore in canonical order so equal paths get equal scores
                let score = self.stack.windows(2).fold(self.objective.start(), |acc, w| {
                    let wt = self.graph.adjacency[w[0]]
                        .iter()
                        .find(|(k, _)| *k == w[1])
                        .map(|(_, x)| *x)
                        .expect("edge on stack");
                    self.objective.extend(acc, wt)
                });
                self.best.offer(Candidate { score, qubits });
            }
            return;
        }
        let edges_left = self.n - self.stack.len();
        for k in 0..self.graph.adjacency[v].len() {
            let (u, w) = self.graph.adjacency[v][k];
            if self.visited[u] {
                continue;
            }
            let next = self.objective.extend(score, w);
            if let Some(worst) = self.best.worst() {
                if !self.objective.viable(self.objective.bound(next, edges_left - 1), worst) {
                    continue;
                }
            }
            self.visited[u] = true;
            self.stack.push(u);
            self.walk(next);
            self.stack.pop();
            self.visited[u] = false;
        }
    }
}

fn search<O: Objective>(graph: &CouplingGraph, n: usize, m: usize, objective: &O) -> Result<Vec<Candidate>> {
    if n < 2 || m == 0 {
        return Err(Error::InvalidExperiment(format!(
            "path search needs n >= 2 and m >= 1 (got n = {n}, m = {m})"
        )));
    }
    if n > graph.labels.len() || n - 1 > graph.num_edges() {
        return Ok(Vec::new());
    }
    let per_root: Vec<Vec<Candidate>> = (0..graph.labels.len())
        .into_par_iter()
        .map(|root| {
            let mut dfs = Dfs {
                graph,
                objective,
                n,
                visited: vec![false; graph.labels.len()],
                stack: vec![root],
                best: Best {
                    m,
                    higher_is_better: O::HIGHER_IS_BETTER,
                    items: Vec::new(),
                },
            };
            dfs.visited[root] = true;
            dfs.walk(objective.start());
            dfs.best.items
        })
        .collect();
    let mut all = Best {
        m,
        higher_is_better: O::HIGHER_IS_BETTER,
        items: Vec::new(),
    };
    for c in per_root.into_iter().flatten() {
        all.offer(c);
    }
    Ok(all.items)
}

fn finish(items: Vec<Candidate>, m: usize, to_weight: impl Fn(&Candidate) -> f64) -> PathSearch {
    let fewer = items.len() < m;
    PathSearch {
        paths: items
            .iter()
            .map(|c| WeightedPath {
                weight_product: to_weight(c),
                qubits: c.qubits.clone(),
                protocol: None,
            })
            .collect(),
        fewer_than_requested: fewer,
    }
}

/// The `m` simple paths with `n` vertices and the largest weight product.
pub fn find_best_paths(graph: &CouplingGraph, n: usize, m: usize) -> Result<PathSearch> {
    let w = graph.weights_descending();
    let mut prefix = vec![1.0];
    for x in &w {
        prefix.push(prefix.last().unwrap() * x);
    }
    let items = search(graph, n, m, &Product { prefix })?;
    Ok(finish(items, m, |c| c.score))
}

/// Same search minimising the sum of `-ln w`. Zero-weight edges cost
/// infinity.
pub fn find_best_paths_log(graph: &CouplingGraph, n: usize, m: usize) -> Result<PathSearch> {
    let w = graph.weights_descending();
    let mut prefix = vec![0.0];
    for x in &w {
        prefix.push(prefix.last().unwrap() - x.ln());
    }
    let items = search(graph, n, m, &LogCost { prefix })?;
    Ok(finish(items, m, |c| (-c.score).exp()))
}

/// Device search under a weight protocol, tagging the results.
pub fn best_device_paths(
    device: &DeviceModel,
    protocol: WeightProtocol,
    n: usize,
    m: usize,
) -> Result<PathSearch> {
    let graph = edge_weights(device, protocol)?;
    let mut found = find_best_paths(&graph, n, m)?;
    for p in &mut found.paths {
        p.protocol = Some(protocol);
    }
    Ok(found)
}

/// Qubit count of the 127-qubit heavy-hex layout.
pub const HEAVY_HEX_QUBITS: u32 = 127;

/// Coupling map of the 127-qubit heavy-hex lattice: seven rows of 14 or 15
/// qubits joined by groups of four bridge qubits.
pub fn heavy_hex_127_edges() -> Vec<(u32, u32)> {
    // (first qubit, length, column of the first qubit)
    let rows: [(u32, u32, u32); 7] = [
        (0, 14, 0),
        (18, 15, 0),
        (37, 15, 0),
        (56, 15, 0),
        (75, 15, 0),
        (94, 15, 0),
        (113, 14, 1),
    ];
    let mut edges = Vec::new();
    for &(start, len, _) in &rows {
        for k in start..start + len - 1 {
            edges.push((k, k + 1));
        }
    }
    let at = |row: usize, col: u32| {
        let (start, _, offset) = rows[row];
        start + col - offset
    };
    for g in 0..6usize {
        let bridge0 = [14u32, 33, 52, 71, 90, 109][g];
        let cols: [u32; 4] = if g % 2 == 0 { [0, 4, 8, 12] } else { [2, 6, 10, 14] };
        for (k, &col) in cols.iter().enumerate() {
            let b = bridge0 + k as u32;
            edges.push((at(g, col), b));
            edges.push((b, at(g + 1, col)));
        }
    }
    edges.sort_unstable();
    edges
}
