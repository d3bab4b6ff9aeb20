//! Reader and writer for the plain-text graph benchmark format.
//!
//! A dataset `DS` is a directory holding
//! * `DS_A.txt` — one `i, j` line per directed edge, 1-indexed global node ids;
//! * `DS_graph_indicator.txt` — line `k` holds the graph id (1-indexed) of node `k`;
//! * `DS_graph_labels.txt` — line `g` holds the label of graph `g`;
//! * optionally `DS_node_labels.txt` — line `k` holds the label of node `k`.
//!
//! Graph and node labels are remapped to contiguous ranges in ascending order
//! of their raw values. Node labels become one-hot features; without them
//! features are one-hot degrees capped at 32. Both edge directions collapse to
//! one undirected edge; self-loops are dropped with a warning.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use smoothgnn_core::graph::degree_onehot_features;
use smoothgnn_core::{Graph, GraphDataset};

use crate::error::{HarnessError, Result};

pub const DEGREE_CAP: usize = 32;

fn data_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Data(msg.into())
}

/// Dataset name inferred from the `*_graph_indicator.txt` file in `dir`.
pub fn dataset_name(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| data_err(format!("cannot read {}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|f| f.strip_suffix("_graph_indicator.txt").map(str::to_owned))
        .collect();
    names.sort();
    match names.len() {
        0 => Err(data_err(format!("no *_graph_indicator.txt in {}", dir.display()))),
        1 => Ok(names.remove(0)),
        _ => Err(data_err(format!("several datasets in {}: {names:?}", dir.display()))),
    }
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))
}

fn parse_ints(text: &str, path: &Path, per_line: usize) -> Result<Vec<Vec<i64>>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim().parse::<i64>().map_err(|_| {
                    data_err(format!("{}:{}: non-integer token {:?}", path.display(), n + 1, t.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() < per_line {
            return Err(data_err(format!(
                "{}:{}: expected {per_line} values, found {}",
                path.display(),
                n + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn remap(values: &[i64]) -> (Vec<usize>, usize) {
    let mut index = BTreeMap::new();
    for &v in values {
        index.entry(v).or_insert(0usize);
    }
    for (i, slot) in index.values_mut().enumerate() {
        *slot = i;
    }
    (values.iter().map(|v| index[v]).collect(), index.len())
}

pub fn load_tu_dataset(dir: &Path) -> Result<GraphDataset> {
    let name = dataset_name(dir)?;
    let indicator_path = file(dir, &name, "graph_indicator");
    let indicator: Vec<i64> = parse_ints(&read_required(&indicator_path)?, &indicator_path, 1)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let labels_path = file(dir, &name, "graph_labels");
    let raw_labels: Vec<i64> = parse_ints(&read_required(&labels_path)?, &labels_path, 1)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let edges_path = file(dir, &name, "A");
    let raw_edges = parse_ints(&read_required(&edges_path)?, &edges_path, 2)?;

    let num_graphs = raw_labels.len();
    if num_graphs == 0 {
        return Err(data_err(format!("{} lists no graphs", labels_path.display())));
    }
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(indicator.len());
    for (k, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > num_graphs {
            return Err(data_err(format!(
                "node {} belongs to graph {g}, but only {num_graphs} graph labels exist",
                k + 1
            )));
        }
        let g = g as usize - 1;
        local.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(data_err(format!("graph {} has no nodes", g + 1)));
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let mut self_loops = 0usize;
    for row in &raw_edges {
        let (a, b) = (row[0], row[1]);
        for v in [a, b] {
            if v < 1 || v as usize > indicator.len() {
                return Err(data_err(format!(
                    "edge ({a}, {b}) references node {v}, but {} nodes exist",
                    indicator.len()
                )));
            }
        }
        let ((ga, la), (gb, lb)) = (local[a as usize - 1], local[b as usize - 1]);
        if ga != gb {
            return Err(data_err(format!("edge ({a}, {b}) connects graphs {} and {}", ga + 1, gb + 1)));
        }
        if la == lb {
            self_loops += 1;
            continue;
        }
        edges[ga].push((la, lb));
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop edges");
    }

    let node_path = file(dir, &name, "node_labels");
    let node_labels = if node_path.exists() {
        let raw: Vec<i64> = parse_ints(&read_required(&node_path)?, &node_path, 1)?
            .into_iter()
            .map(|r| r[0])
            .collect();
        if raw.len() != indicator.len() {
            return Err(data_err(format!(
                "{} has {} lines for {} nodes",
                node_path.display(),
                raw.len(),
                indicator.len()
            )));
        }
        Some(remap(&raw))
    } else {
        None
    };

    let (labels, num_classes) = remap(&raw_labels);
    let mut features: Vec<Array2<f64>> = sizes.iter().map(|&n| Array2::zeros((n, 1))).collect();
    if let Some((ids, width)) = &node_labels {
        features = sizes.iter().map(|&n| Array2::zeros((n, *width))).collect();
        for (k, &(g, l)) in local.iter().enumerate() {
            features[g][[l, ids[k]]] = 1.0;
        }
    }
    let graphs = features
        .into_iter()
        .zip(edges)
        .enumerate()
        .map(|(g, (x, e))| {
            let graph = Graph::new(x, e, labels[g], g).map_err(|err| data_err(format!("graph {}: {err}", g + 1)))?;
            if node_labels.is_some() {
                Ok(graph)
            } else {
                let x = degree_onehot_features(&graph, DEGREE_CAP);
                Ok(graph.with_features(x)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDataset::new(graphs, num_classes)?)
}

/// Writes `dataset` in the text format under `dir` with prefix `name`.
/// Node labels are the argmax of each feature row.
pub fn write_tu_dataset(dataset: &GraphDataset, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(HarnessError::io("creating", dir))?;
    let (mut a, mut ind, mut gl, mut nl) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        for &(i, j) in graph.edges() {
            a.push_str(&format!("{}, {}\n{}, {}\n", offset + i + 1, offset + j + 1, offset + j + 1, offset + i + 1));
        }
        for row in graph.node_features.rows() {
            ind.push_str(&format!("{}\n", g + 1));
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            nl.push_str(&format!("{best}\n"));
        }
        gl.push_str(&format!("{}\n", dataset.true_labels[g]));
        offset += graph.num_nodes();
    }
    for (suffix, body) in [("A", a), ("graph_indicator", ind), ("graph_labels", gl), ("node_labels", nl)] {
        let path = file(dir, name, suffix);
        fs::write(&path, body).map_err(HarnessError::io("writing", path))?;
    }
    Ok(())
}
