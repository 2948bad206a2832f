//! Node-attributed undirected graphs in CSR form, split assignments and the
//! label views handed to the sampler.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub type NodeId = usize;

/// Immutable node-attributed graph.
///
/// Adjacency is stored symmetrically: every undirected edge appears once in
/// each endpoint's neighbor list. Neighbor lists are sorted ascending and
/// contain neither duplicates nor self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    features: Array2<f64>,
    labels: Vec<u32>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// duplicates collapsed and self-loops dropped.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u32>,
        num_classes: usize,
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if let Some((v, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y as usize >= num_classes)
        {
            return Err(Error::Validation(format!(
                "label {y} of node {v} is not below the class count {num_classes}"
            )));
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at node {}, column {}",
                pos / features.ncols().max(1),
                pos % features.ncols().max(1)
            )));
        }

        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}): endpoint out of range for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Graph {
            offsets,
            targets,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, v: NodeId) -> &[f64] {
        let d = self.features.ncols();
        let flat = self
            .features
            .as_slice()
            .expect("feature matrix is kept in standard layout");
        &flat[v * d..(v + 1) * d]
    }

    /// Ground-truth labels. Training and inference code paths read labels
    /// through a [`LabelSource`] instead; this accessor is for split
    /// construction and scoring.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, v: NodeId) -> u32 {
        self.labels[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbors of `v` in ascending id order.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        self.check_node(v)?;
        Ok(self.neighbors_unchecked(v))
    }

    pub(crate) fn neighbors_unchecked(&self, v: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                node: v,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edge_list(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors_unchecked(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: &[(NodeId, NodeId)]) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            edges,
        )
    }

    /// Removes `floor(fraction * |E|)` undirected edges chosen uniformly
    /// without replacement. The deleted edges are a prefix of one seeded
    /// permutation, so a larger fraction under the same seed deletes a
    /// superset of edges.
    pub fn delete_edges(&self, fraction: f64, seed: u64) -> Result<Graph> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Validation(format!(
                "edge-deletion fraction {fraction} outside [0, 1]"
            )));
        }
        let mut edges = self.edge_list();
        let remove = (fraction * edges.len() as f64).floor() as usize;
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.shuffle(&mut rng::derived_rng(seed, &[tag::DELETE_EDGES]));
        let mut dropped = vec![false; edges.len()];
        for &i in &order[..remove] {
            dropped[i] = true;
        }
        let mut i = 0;
        edges.retain(|_| {
            i += 1;
            !dropped[i - 1]
        });
        self.with_edges(&edges)
    }

    /// Share of `v`'s neighbors carrying `v`'s label.
    pub fn label_homogeneity(&self, v: NodeId) -> Result<f64> {
        self.check_node(v)?;
        let nbrs = self.neighbors_unchecked(v);
        if nbrs.is_empty() {
            return Err(Error::IsolatedNode(v));
        }
        let same = nbrs
            .iter()
            .filter(|&&u| self.labels[u] == self.labels[v])
            .count();
        Ok(same as f64 / nbrs.len() as f64)
    }

    /// Writes the node and edge files in the tab-separated exchange format.
    pub fn write_files(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        write_with(nodes_path, |w| {
            write!(w, "id\tlabel")?;
            for j in 0..self.num_features() {
                write!(w, "\tf{j}")?;
            }
            writeln!(w)?;
            for v in 0..self.num_nodes() {
                write!(w, "{v}\t{}", self.labels[v])?;
                for x in self.feature_row(v) {
                    write!(w, "\t{x}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
        write_edges(edges_path, &self.edge_list())
    }
}

pub(crate) fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_edges(path: &Path, edges: &[(NodeId, NodeId)]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "src\tdst")?;
        for (u, v) in edges {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_field<T: FromStr>(path: &Path, line: usize, raw: &str, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} from {raw:?}")))
}

/// Loads a graph from a nodes file and an edges file. The class count is
/// inferred as `max label + 1`.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<Graph> {
    load_graph_with_classes(nodes_path, edges_path, None)
}

/// Like [`load_graph`] but validates labels against a known class count.
pub fn load_graph_with_classes(
    nodes_path: &Path,
    edges_path: &Path,
    num_classes: Option<usize>,
) -> Result<Graph> {
    let lines = read_lines(nodes_path)?;
    let Some(((header_no, header), rows)) = lines.split_first() else {
        return Err(parse_err(nodes_path, 1, "missing header"));
    };
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < 2 || columns[0].trim() != "id" || columns[1].trim() != "label" {
        return Err(parse_err(
            nodes_path,
            *header_no,
            "header must start with `id<TAB>label`",
        ));
    }
    let dim = columns.len() - 2;
    let n = rows.len();
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = vec![0u32; n];
    let mut seen = vec![false; n];
    for (line_no, row) in rows {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                nodes_path,
                *line_no,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let id: usize = parse_field(nodes_path, *line_no, fields[0], "node id")?;
        if id >= n {
            return Err(Error::Validation(format!(
                "node id {id} at {}:{line_no} breaks the contiguous range 0..{n}",
                nodes_path.display()
            )));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::Validation(format!(
                "duplicate node id {id} at {}:{line_no}",
                nodes_path.display()
            )));
        }
        let label: i64 = parse_field(nodes_path, *line_no, fields[1], "label")?;
        if label < 0 || num_classes.is_some_and(|c| label as usize >= c) {
            return Err(Error::Validation(format!(
                "label {label} of node {id} outside [0, {})",
                num_classes.map_or("inf".to_string(), |c| c.to_string())
            )));
        }
        labels[id] = u32::try_from(label)
            .map_err(|_| parse_err(nodes_path, *line_no, "label does not fit in u32"))?;
        for (j, raw) in fields[2..].iter().enumerate() {
            features[[id, j]] = parse_field(nodes_path, *line_no, raw, "feature")?;
        }
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m as usize + 1));

    let mut edges = Vec::new();
    for (i, (line_no, row)) in read_lines(edges_path)?.iter().enumerate() {
        let fields: Vec<&str> = row.split('\t').collect();
        if i == 0 && fields.first().is_some_and(|f| f.trim() == "src") {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(
                edges_path,
                *line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let u: usize = parse_field(edges_path, *line_no, fields[0], "source id")?;
        let v: usize = parse_field(edges_path, *line_no, fields[1], "target id")?;
        edges.push((u, v));
    }
    Graph::new(features, labels, classes, &edges)
}

/// Role of a node in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
    Unused,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
            Role::Unused => "unused",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Role::Train),
            "validation" | "val" => Ok(Role::Validation),
            "test" => Ok(Role::Test),
            "unused" => Ok(Role::Unused),
            other => Err(Error::Validation(format!("unknown role {other:?}"))),
        }
    }
}

/// One role per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    roles: Vec<Role>,
}

impl SplitAssignment {
    pub fn new(roles: Vec<Role>) -> Self {
        SplitAssignment { roles }
    }

    pub fn all_unused(n: usize) -> Self {
        SplitAssignment {
            roles: vec![Role::Unused; n],
        }
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.roles[v]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn set(&mut self, v: NodeId, role: Role) {
        self.roles[v] = role;
    }

    /// Nodes with `role`, ascending.
    pub fn nodes(&self, role: Role) -> Vec<NodeId> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_with(path, |w| {
            writeln!(w, "id\trole")?;
            for (v, r) in self.roles.iter().enumerate() {
                writeln!(w, "{v}\t{r}")?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        let mut pairs = Vec::with_capacity(lines.len());
        for (i, (line_no, row)) in lines.iter().enumerate() {
            let fields: Vec<&str> = row.split('\t').collect();
            if i == 0 && fields.first().is_some_and(|f| f.trim() == "id") {
                continue;
            }
            if fields.len() != 2 {
                return Err(parse_err(path, *line_no, "expected `id<TAB>role`"));
            }
            let id: usize = parse_field(path, *line_no, fields[0], "node id")?;
            let role: Role = fields[1]
                .parse()
                .map_err(|_| parse_err(path, *line_no, format!("unknown role {:?}", fields[1])))?;
            pairs.push((id, role));
        }
        let mut roles = vec![Role::Unused; pairs.len()];
        let mut seen = BTreeSet::new();
        for (id, role) in pairs {
            if id >= roles.len() || !seen.insert(id) {
                return Err(Error::Validation(format!(
                    "split file {}: ids must be 0..{} without repeats",
                    path.display(),
                    roles.len()
                )));
            }
            roles[id] = role;
        }
        Ok(SplitAssignment { roles })
    }
}

/// Read access to the labels an algorithm is allowed to see.
pub trait LabelSource: Sync {
    fn num_nodes(&self) -> usize;
    fn known_label(&self, v: NodeId) -> Option<u32>;
}

/// Partial label map. Only nodes whose label may be used (normally the
/// training split) are populated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownLabels {
    labels: Vec<Option<u32>>,
}

impl KnownLabels {
    pub fn new(labels: Vec<Option<u32>>) -> Self {
        KnownLabels { labels }
    }

    /// No label known: the inference-time view.
    pub fn none(n: usize) -> Self {
        KnownLabels {
            labels: vec![None; n],
        }
    }

    /// Labels of the nodes holding `role` in `split`.
    pub fn from_split(g: &Graph, split: &SplitAssignment, role: Role) -> Self {
        KnownLabels {
            labels: (0..g.num_nodes())
                .map(|v| (split.role(v) == role).then(|| g.label(v)))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

impl LabelSource for KnownLabels {
    fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    fn known_label(&self, v: NodeId) -> Option<u32> {
        self.labels[v]
    }
}
