//! Converter for the citation-dataset layout used by Cora and Citeseer.
//!
//! `<name>.content`: one paper per line, `paper_id <tab> f_0 ... f_{d-1}
//! <tab> class_name`. `<name>.cites`: `cited_id <tab> citing_id`. Paper ids
//! become node ids in file order; class names are numbered in sorted order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone)]
pub struct Converted {
    pub graph: Graph,
    /// Original paper id of each node.
    pub paper_ids: Vec<String>,
    /// Class name of each label id.
    pub class_names: Vec<String>,
    /// Citation lines naming an unknown paper, skipped.
    pub skipped_citations: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a `.content` / `.cites` pair. Citations whose endpoints are not in
/// the content file are skipped and counted; this occurs in the public
/// Citeseer release.
pub fn convert_citation(content: &Path, cites: &Path) -> Result<Converted> {
    let text = read(content)?;
    let mut paper_ids = Vec::new();
    let mut class_of = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(content, i + 1, "expected id, features and class"));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(content, i + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse_err(
                    content,
                    i + 1,
                    format!("{} features, expected {}", feats.len(), first.len()),
                ));
            }
        }
        paper_ids.push(fields[0].to_string());
        class_of.push(fields[fields.len() - 1].to_string());
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(parse_err(content, 0, "no papers"));
    }
    let mut class_names = class_of.clone();
    class_names.sort();
    class_names.dedup();
    let label_of: HashMap<&str, u32> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let labels: Vec<u32> = class_of.iter().map(|c| label_of[c.as_str()]).collect();
    let node_of: HashMap<&str, NodeId> = paper_ids
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    if node_of.len() != paper_ids.len() {
        return Err(Error::Validation(format!(
            "duplicate paper ids in {}",
            content.display()
        )));
    }

    let text = read(cites)?;
    let mut edges = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(cites, i + 1, "expected two paper ids"));
        }
        match (node_of.get(fields[0]), node_of.get(fields[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} citations with unknown endpoints");
    }

    let d = rows[0].len();
    let features = Array2::from_shape_vec((rows.len(), d), rows.concat())
        .map_err(|e| Error::Shape(e.to_string()))?;
    let graph = Graph::new(features, labels, class_names.len(), &edges)?;
    Ok(Converted {
        graph,
        paper_ids,
        class_names,
        skipped_citations: skipped,
    })
}
