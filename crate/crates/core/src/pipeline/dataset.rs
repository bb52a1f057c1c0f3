//! Plain-text dataset format.
//!
//! ```text
//! manifest.json  { "edges": "edges.tsv", "features": "features.csv", "labels": "labels.txt",
//!                  "num_nodes": n, "directed": bool, "split_seed": u64, "num_classes": C (optional) }
//! edges.tsv      one arc per line, "src<TAB>dst"; messages flow src -> dst
//! features.csv   n lines of comma-separated floats, equal width
//! labels.txt     n lines, one class id in [0, C) each
//! ```
//!
//! File names are resolved relative to the manifest. Blank lines are ignored.
//! Floats are written in shortest round-trip form, so export followed by
//! ingest reproduces the values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_json, write_json};
use crate::encoding::standardize_columns;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub num_nodes: usize,
    pub directed: bool,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: LabelVector,
    pub split_seed: u64,
}

fn input_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Input {
        source_name: file.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    read_lines(path)?
        .into_iter()
        .map(|(no, line)| {
            let mut parts = line.split('\t');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(input_err(path, no, "expected `src<TAB>dst`"));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| input_err(path, no, format!("`{s}` is not a node id")))
            };
            let (src, dst) = (parse(a)?, parse(b)?);
            if src >= n || dst >= n {
                return Err(input_err(
                    path,
                    no,
                    format!("node id out of range [0, {n})"),
                ));
            }
            Ok((src, dst))
        })
        .collect()
}

fn parse_features(path: &Path, n: usize) -> Result<DenseMatrix> {
    let lines = read_lines(path)?;
    if lines.len() != n {
        return Err(input_err(
            path,
            0,
            format!(
                "{} feature rows but the manifest declares {n} nodes",
                lines.len()
            ),
        ));
    }
    let mut width = None;
    let mut data = Vec::new();
    for (no, line) in lines {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| input_err(path, no, format!("`{s}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(input_err(
                    path,
                    no,
                    format!("{} columns, expected {w}", row.len()),
                ));
            }
            _ => {}
        }
        data.extend(row);
    }
    DenseMatrix::from_vec(n, width.unwrap_or(0), data)
}

fn parse_labels(path: &Path, n: usize, num_classes: Option<usize>) -> Result<LabelVector> {
    let lines = read_lines(path)?;
    if lines.len() != n {
        return Err(input_err(
            path,
            0,
            format!("{} labels but the manifest declares {n} nodes", lines.len()),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    for (no, line) in &lines {
        let c: usize = line
            .trim()
            .parse()
            .map_err(|_| input_err(path, *no, format!("`{line}` is not a class id")))?;
        if let Some(k) = num_classes {
            if c >= k {
                return Err(input_err(
                    path,
                    *no,
                    format!("class {c} out of range [0, {k})"),
                ));
            }
        }
        labels.push(c);
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabelVector::new(labels, k).map_err(|e| input_err(path, 0, e.to_string()))
}

/// Reads a dataset manifest and the three files it names. With
/// `standardize_features`, feature columns are scaled to zero mean and unit
/// variance.
pub fn ingest_dataset(manifest_path: &Path, standardize_features: bool) -> Result<Dataset> {
    let man: DatasetManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let n = man.num_nodes;
    if n == 0 {
        return Err(input_err(manifest_path, 0, "num_nodes must be positive"));
    }
    let edges = parse_edges(&dir.join(&man.edges), n)?;
    let graph = Graph::build(&edges, n, man.directed)?;
    let mut features = parse_features(&dir.join(&man.features), n)?;
    if standardize_features {
        features = standardize_columns(&features);
    }
    let labels = parse_labels(&dir.join(&man.labels), n, man.num_classes)?;
    Ok(Dataset {
        graph,
        features,
        labels,
        split_seed: man.split_seed,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `data` in the dataset format under `dir` and returns the manifest
/// path. Undirected graphs list each edge once.
pub fn export_dataset(dir: &Path, data: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = &data.graph;
    let edges: Vec<(usize, usize)> = if g.is_directed() {
        g.arcs().collect()
    } else {
        g.undirected_edges()
    };
    let mut text = String::new();
    for (s, d) in edges {
        writeln!(text, "{s}\t{d}").expect("string write");
    }
    write_text(&dir.join("edges.tsv"), &text)?;

    text.clear();
    for i in 0..data.features.rows() {
        let row: Vec<String> = data.features.row(i).iter().map(f64::to_string).collect();
        writeln!(text, "{}", row.join(",")).expect("string write");
    }
    write_text(&dir.join("features.csv"), &text)?;

    text.clear();
    for c in data.labels.as_slice() {
        writeln!(text, "{c}").expect("string write");
    }
    write_text(&dir.join("labels.txt"), &text)?;

    let path = dir.join("manifest.json");
    write_json(
        &path,
        &DatasetManifest {
            edges: "edges.tsv".into(),
            features: "features.csv".into(),
            labels: "labels.txt".into(),
            num_nodes: g.num_nodes(),
            directed: g.is_directed(),
            split_seed: data.split_seed,
            num_classes: Some(data.labels.num_classes()),
        },
    )?;
    Ok(path)
}
