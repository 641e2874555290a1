//! Graphs, graph datasets, TUDataset ingestion and synthetic data.

mod synth;
mod tudataset;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndiff::Tensor;

pub use synth::synth_two_class;
pub use tudataset::{load_tudataset, write_tudataset};

/// Degree one-hot width is capped at this many buckets minus one.
pub const MAX_DEGREE_CAP: usize = 50;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph must have at least one node")]
    Empty,
    #[error("feature matrix has shape {got:?}, expected {nodes} rows")]
    FeatureRows { got: Vec<usize>, nodes: usize },
    #[error("feature matrix contains a non-finite value")]
    NonFiniteFeature,
    #[error("graph {index} has feature dimension {got}, dataset uses {expected}")]
    FeatureDim {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("graph {index} has label {label} but the dataset declares {num_classes} classes")]
    LabelRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("graph {0} has no label")]
    MissingLabel(usize),
    #[error("required file {0} is missing")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: node {node} is out of range (1..={declared} declared)")]
    UnknownNode {
        file: PathBuf,
        line: usize,
        node: i64,
        declared: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Undirected graph with node features and an optional class label.
///
/// Edges are stored once, as `(i, j)` with `i < j`, sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: Option<usize>,
}

impl Graph {
    /// Validates and canonicalises a graph. Edge direction and duplicates
    /// are normalised away; self-loops are rejected.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        label: Option<usize>,
    ) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(GraphError::EdgeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        if features.shape().len() != 2 || features.rows() != node_count {
            return Err(GraphError::FeatureRows {
                got: features.shape().to_vec(),
                nodes: node_count,
            });
        }
        if !features.is_finite() {
            return Err(GraphError::NonFiniteFeature);
        }
        Ok(Self {
            node_count,
            edges: canon,
            features,
            label,
        })
    }

    /// Graph with all-zero features of width `feature_dim`.
    pub fn unfeatured(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        feature_dim: usize,
    ) -> Result<Self, GraphError> {
        Self::new(
            node_count,
            edges,
            Tensor::zeros(&[node_count, feature_dim]),
            None,
        )
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn with_features(self, features: Tensor) -> Result<Self, GraphError> {
        Self::new(self.node_count, self.edges, features, self.label)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Subgraph induced by `keep` (indices into this graph, strictly
    /// increasing). Nodes are renumbered in the order given.
    pub fn induced(&self, keep: &[usize]) -> Graph {
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let mut new_index = vec![usize::MAX; self.node_count];
        for (new, &old) in keep.iter().enumerate() {
            new_index[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                let (na, nb) = (new_index[a], new_index[b]);
                (na != usize::MAX && nb != usize::MAX).then_some((na, nb))
            })
            .collect();
        let f = self.feature_dim();
        let mut data = Vec::with_capacity(keep.len() * f);
        for &old in keep {
            data.extend_from_slice(self.features.row(old));
        }
        Graph {
            node_count: keep.len(),
            edges,
            features: Tensor::matrix(keep.len(), f, data).expect("row-major copy"),
            label: self.label,
        }
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.node_count, "permutation length");
        let f = self.feature_dim();
        let mut data = vec![0.0; self.node_count * f];
        for (old, &new) in perm.iter().enumerate() {
            data[new * f..(new + 1) * f].copy_from_slice(self.features.row(old));
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b]));
        Graph::new(
            self.node_count,
            edges,
            Tensor::matrix(self.node_count, f, data).expect("row-major copy"),
            self.label,
        )
        .expect("permutation preserves validity")
    }

    /// Copy with edge set replaced; used by augmentations that keep nodes.
    pub(crate) fn with_edges_unchecked(&self, mut edges: Vec<(usize, usize)>) -> Graph {
        edges.sort_unstable();
        edges.dedup();
        Graph {
            node_count: self.node_count,
            edges,
            features: self.features.clone(),
            label: self.label,
        }
    }
}

/// Replaces features with a one-hot encoding of `min(degree, max_degree)`.
pub fn degree_features(g: &Graph, max_degree: usize) -> Graph {
    assert!(max_degree >= 1, "max_degree must be at least 1");
    let width = max_degree + 1;
    let mut data = vec![0.0; g.node_count() * width];
    for (i, d) in g.degrees().into_iter().enumerate() {
        data[i * width + d.min(max_degree)] = 1.0;
    }
    Graph {
        node_count: g.node_count,
        edges: g.edges.clone(),
        features: Tensor::matrix(g.node_count, width, data).expect("row-major"),
        label: g.label,
    }
}

/// Ordered collection of graphs sharing one feature width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    feature_dim: usize,
    num_classes: usize,
}

impl GraphDataset {
    pub fn new(graphs: Vec<Graph>, num_classes: usize) -> Result<Self, GraphError> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (index, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(GraphError::FeatureDim {
                    index,
                    got: g.feature_dim(),
                    expected: feature_dim,
                });
            }
            if let Some(label) = g.label() {
                if label >= num_classes {
                    return Err(GraphError::LabelRange {
                        index,
                        label,
                        num_classes,
                    });
                }
            }
        }
        Ok(Self {
            graphs,
            feature_dim,
            num_classes,
        })
    }

    /// Assigns degree one-hot features to every graph, with the width set by
    /// the dataset-wide maximum degree capped at [`MAX_DEGREE_CAP`].
    pub fn with_degree_features(graphs: Vec<Graph>, num_classes: usize) -> Result<Self, GraphError> {
        let max_degree = graphs
            .iter()
            .map(Graph::max_degree)
            .max()
            .unwrap_or(0)
            .clamp(1, MAX_DEGREE_CAP);
        let graphs = graphs.iter().map(|g| degree_features(g, max_degree)).collect();
        Self::new(graphs, num_classes)
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Labels of every graph; fails if any graph is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>, GraphError> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| g.label().ok_or(GraphError::MissingLabel(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests;
