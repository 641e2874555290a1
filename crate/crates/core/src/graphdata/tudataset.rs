//! TUDataset text format.
//!
//! A dataset `NAME` lives in one directory as:
//!
//! - `NAME_A.txt`: one `i, j` row per directed edge, 1-based node ids.
//! - `NAME_graph_indicator.txt`: graph id of node `i` on line `i`.
//! - `NAME_graph_labels.txt`: class of graph `g` on line `g`.
//! - `NAME_node_attributes.txt` (optional): comma-separated reals per node.
//! - `NAME_node_labels.txt` (optional): integer label per node.
//!
//! Node attributes take precedence over node labels; with neither, nodes get
//! degree one-hot features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{Graph, GraphDataset, GraphError};
use crate::ndiff::Tensor;

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String, GraphError> {
    if !path.exists() {
        return Err(GraphError::MissingFile(path.to_path_buf()));
    }
    read(path)
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>, GraphError> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_int(path: &Path, line: usize, token: &str) -> Result<i64, GraphError> {
    token.trim().parse().map_err(|_| GraphError::Parse {
        file: path.to_path_buf(),
        line,
        message: format!("expected an integer, found {:?}", token.trim()),
    })
}

fn parse_int_column(path: &Path, text: &str) -> Result<Vec<i64>, GraphError> {
    lines(text).map(|(n, l)| parse_int(path, n, l)).collect()
}

pub fn load_tudataset(directory: impl AsRef<Path>, name: &str) -> Result<GraphDataset, GraphError> {
    let dir = directory.as_ref();
    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let lab_path = file_path(dir, name, "graph_labels");
    let a_text = read_required(&a_path)?;
    let ind_text = read_required(&ind_path)?;
    let lab_text = read_required(&lab_path)?;

    let indicator = parse_int_column(&ind_path, &ind_text)?;
    let raw_labels = parse_int_column(&lab_path, &lab_text)?;
    let total_nodes = indicator.len();

    // graph order follows first appearance in the indicator file
    let mut graph_slot: HashMap<i64, usize> = HashMap::new();
    let mut graph_ids = Vec::new();
    let mut node_graph = Vec::with_capacity(total_nodes);
    let mut local_index = Vec::with_capacity(total_nodes);
    let mut sizes: Vec<usize> = Vec::new();
    for &gid in &indicator {
        let slot = *graph_slot.entry(gid).or_insert_with(|| {
            graph_ids.push(gid);
            sizes.push(0);
            graph_ids.len() - 1
        });
        node_graph.push(slot);
        local_index.push(sizes[slot]);
        sizes[slot] += 1;
    }
    for (slot, &gid) in graph_ids.iter().enumerate() {
        if gid < 1 || gid as usize > raw_labels.len() {
            let line = indicator.iter().position(|&g| g == gid).unwrap_or(0) + 1;
            return Err(GraphError::Parse {
                file: ind_path.clone(),
                line,
                message: format!(
                    "graph id {gid} has no entry among {} graph labels (graph #{slot})",
                    raw_labels.len()
                ),
            });
        }
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); graph_ids.len()];
    let mut self_loops = 0usize;
    for (line, row) in lines(&a_text) {
        let mut parts = row.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GraphError::Parse {
                file: a_path.clone(),
                line,
                message: format!("expected `i, j`, found {row:?}"),
            });
        };
        let node = |tok: &str| -> Result<usize, GraphError> {
            let v = parse_int(&a_path, line, tok)?;
            if v < 1 || v as usize > total_nodes {
                return Err(GraphError::UnknownNode {
                    file: a_path.clone(),
                    line,
                    node: v,
                    declared: total_nodes,
                });
            }
            Ok(v as usize - 1)
        };
        let (a, b) = (node(a)?, node(b)?);
        if a == b {
            self_loops += 1;
            continue;
        }
        if node_graph[a] != node_graph[b] {
            return Err(GraphError::Parse {
                file: a_path.clone(),
                line,
                message: format!("edge ({}, {}) joins two different graphs", a + 1, b + 1),
            });
        }
        edges[node_graph[a]].push((local_index[a], local_index[b]));
    }
    if self_loops > 0 {
        warn!("{}: dropped {self_loops} self-loop rows", a_path.display());
    }

    let attr_path = file_path(dir, name, "node_attributes");
    let node_lab_path = file_path(dir, name, "node_labels");
    let features = if let Some(text) = read_optional(&attr_path)? {
        Some(parse_attributes(&attr_path, &text, total_nodes)?)
    } else if let Some(text) = read_optional(&node_lab_path)? {
        Some(one_hot_node_labels(&node_lab_path, &text, total_nodes)?)
    } else {
        None
    };

    // class indices follow the sorted order of the raw label values
    let classes: BTreeSet<i64> = graph_ids.iter().map(|&g| raw_labels[g as usize - 1]).collect();
    let class_index: BTreeMap<i64, usize> = classes.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut per_graph_rows: Vec<Vec<usize>> = vec![Vec::new(); graph_ids.len()];
    for (node, &slot) in node_graph.iter().enumerate() {
        per_graph_rows[slot].push(node);
    }

    let mut graphs = Vec::with_capacity(graph_ids.len());
    for (slot, &gid) in graph_ids.iter().enumerate() {
        let n = sizes[slot];
        let label = class_index[&raw_labels[gid as usize - 1]];
        let feats = match &features {
            Some(all) => {
                let f = all.cols();
                let mut data = Vec::with_capacity(n * f);
                for &node in &per_graph_rows[slot] {
                    data.extend_from_slice(all.row(node));
                }
                Tensor::matrix(n, f, data).expect("row-major copy")
            }
            None => Tensor::zeros(&[n, 0]),
        };
        let edges = std::mem::take(&mut edges[slot]);
        graphs.push(Graph::new(n, edges, feats, Some(label))?);
    }

    let num_classes = classes.len().max(1);
    if features.is_some() {
        GraphDataset::new(graphs, num_classes)
    } else {
        GraphDataset::with_degree_features(graphs, num_classes)
    }
}

fn parse_attributes(path: &Path, text: &str, total_nodes: usize) -> Result<Tensor, GraphError> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total_nodes);
    for (line, row) in lines(text) {
        let values = row
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| GraphError::Parse {
                        file: path.to_path_buf(),
                        line,
                        message: format!("expected a finite real, found {:?}", tok.trim()),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(GraphError::Parse {
                    file: path.to_path_buf(),
                    line,
                    message: format!("expected {} attributes, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push(values);
    }
    check_node_count(path, rows.len(), total_nodes)?;
    Tensor::from_rows(&rows).map_err(|e| GraphError::Parse {
        file: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

fn one_hot_node_labels(path: &Path, text: &str, total_nodes: usize) -> Result<Tensor, GraphError> {
    let values = parse_int_column(path, text)?;
    check_node_count(path, values.len(), total_nodes)?;
    let distinct: BTreeSet<i64> = values.iter().copied().collect();
    let index: BTreeMap<i64, usize> = distinct.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let width = distinct.len();
    let mut data = vec![0.0; total_nodes * width];
    for (node, v) in values.iter().enumerate() {
        data[node * width + index[v]] = 1.0;
    }
    Ok(Tensor::matrix(total_nodes, width, data).expect("row-major"))
}

fn check_node_count(path: &Path, got: usize, total_nodes: usize) -> Result<(), GraphError> {
    if got != total_nodes {
        return Err(GraphError::Parse {
            file: path.to_path_buf(),
            line: got,
            message: format!("{got} node rows, but the indicator declares {total_nodes} nodes"),
        });
    }
    Ok(())
}

/// Writes `A`, `graph_indicator`, `graph_labels` and `node_attributes`
/// files. Every graph must be labeled. Reloading with [`load_tudataset`]
/// reproduces the dataset exactly.
pub fn write_tudataset(
    dataset: &GraphDataset,
    directory: impl AsRef<Path>,
    name: &str,
) -> Result<(), GraphError> {
    let dir = directory.as_ref();
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let labels = dataset.labels()?;

    let mut a = String::new();
    let mut indicator = String::new();
    let mut graph_labels = String::new();
    let mut attributes = String::new();
    let mut offset = 0;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        for &(i, j) in g.edges() {
            let (i, j) = (i + offset + 1, j + offset + 1);
            let _ = writeln!(a, "{i}, {j}");
            let _ = writeln!(a, "{j}, {i}");
        }
        for node in 0..g.node_count() {
            let _ = writeln!(indicator, "{}", gi + 1);
            let row: Vec<String> = g.features().row(node).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(attributes, "{}", row.join(", "));
        }
        let _ = writeln!(graph_labels, "{}", labels[gi]);
        offset += g.node_count();
    }

    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", indicator),
        ("graph_labels", graph_labels),
        ("node_attributes", attributes),
    ] {
        let path = file_path(dir, name, suffix);
        fs::write(&path, body).map_err(|source| GraphError::Io { path, source })?;
    }
    Ok(())
}
