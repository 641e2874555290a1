//! Stochastic graph augmentations and view-pair policies.
//!
//! Every augmentation is a pure function of the input graph, a ratio `p`
//! and a random generator. Removal and insertion counts are
//! `floor(p · count)`, so small ratios leave tiny graphs untouched.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphdata::Graph;
use crate::ndiff::Tensor;
use crate::rng::{stream, tag, StreamRng};

/// Slack for `p · count` products such as `0.29 · 100 = 28.999…`.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("augmentation ratio must lie in [0, 1), got {0}")]
    Ratio(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    NodeDrop,
    EdgeDrop,
    EdgeAdd,
    FeatureMask,
    Subgraph,
    Identity,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 6] = [
        AugmentKind::NodeDrop,
        AugmentKind::EdgeDrop,
        AugmentKind::EdgeAdd,
        AugmentKind::FeatureMask,
        AugmentKind::Subgraph,
        AugmentKind::Identity,
    ];
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AugmentKind::NodeDrop => "node_drop",
            AugmentKind::EdgeDrop => "edge_drop",
            AugmentKind::EdgeAdd => "edge_add",
            AugmentKind::FeatureMask => "feature_mask",
            AugmentKind::Subgraph => "subgraph",
            AugmentKind::Identity => "identity",
        };
        f.write_str(s)
    }
}

/// One augmentation with its intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    #[serde(default)]
    pub p: f64,
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind, p: f64) -> Result<Self, AugmentError> {
        let spec = Self { kind, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        Self {
            kind: AugmentKind::Identity,
            p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if (0.0..1.0).contains(&self.p) {
            Ok(())
        } else {
            Err(AugmentError::Ratio(self.p))
        }
    }

    pub fn apply(&self, g: &Graph, rng: &mut StreamRng) -> Graph {
        match self.kind {
            AugmentKind::NodeDrop => node_drop(g, self.p, rng),
            AugmentKind::EdgeDrop => edge_drop(g, self.p, rng),
            AugmentKind::EdgeAdd => edge_add(g, self.p, rng),
            AugmentKind::FeatureMask => feature_mask(g, self.p, rng),
            AugmentKind::Subgraph => subgraph_rw(g, self.p, rng),
            AugmentKind::Identity => g.clone(),
        }
    }
}

/// The pair of augmentations applied to every graph, plus the seed that
/// keys their random streams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub first: AugmentSpec,
    pub second: AugmentSpec,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            first: AugmentSpec {
                kind: AugmentKind::NodeDrop,
                p: 0.2,
            },
            second: AugmentSpec {
                kind: AugmentKind::Subgraph,
                p: 0.2,
            },
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        self.first.validate()?;
        self.second.validate()
    }

    /// Views of graph `graph_index` at `epoch`. Each view draws from its own
    /// stream, so the result does not depend on evaluation order.
    pub fn views(&self, g: &Graph, epoch: u64, graph_index: u64) -> (Graph, Graph) {
        let mut r1 = stream(self.seed, &[tag::VIEW, epoch, graph_index, 1]);
        let mut r2 = stream(self.seed, &[tag::VIEW, epoch, graph_index, 2]);
        (self.first.apply(g, &mut r1), self.second.apply(g, &mut r2))
    }
}

/// Draws both views from one caller-supplied generator.
pub fn sample_pair(g: &Graph, policy: &AugmentPolicy, rng: &mut StreamRng) -> (Graph, Graph) {
    let a = policy.first.apply(g, rng);
    let b = policy.second.apply(g, rng);
    (a, b)
}

/// `floor(p · count)`.
pub fn portion(p: f64, count: usize) -> usize {
    (p * count as f64 + COUNT_SLACK).floor() as usize
}

/// Removes `floor(p · N)` uniformly chosen nodes with their edges.
pub fn node_drop(g: &Graph, p: f64, rng: &mut StreamRng) -> Graph {
    let n = g.node_count();
    let drop = portion(p, n).min(n - 1);
    if drop == 0 {
        return g.clone();
    }
    let mut removed = vec![false; n];
    for i in sample(rng, n, drop) {
        removed[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    g.induced(&keep)
}

/// Removes `floor(p · |E|)` uniformly chosen edges.
pub fn edge_drop(g: &Graph, p: f64, rng: &mut StreamRng) -> Graph {
    let m = g.edge_count();
    let drop = portion(p, m);
    if drop == 0 {
        return g.clone();
    }
    let mut removed = vec![false; m];
    for i in sample(rng, m, drop) {
        removed[i] = true;
    }
    let edges = g
        .edges()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&e, _)| e)
        .collect();
    g.with_edges_unchecked(edges)
}

/// Inserts `floor(p · |E|)` uniformly chosen absent edges, capped by the
/// number of free node pairs.
pub fn edge_add(g: &Graph, p: f64, rng: &mut StreamRng) -> Graph {
    let n = g.node_count();
    let pairs = n * (n - 1) / 2;
    let free = pairs - g.edge_count();
    let add = portion(p, g.edge_count()).min(free);
    if add == 0 {
        return g.clone();
    }
    let mut edges = g.edges().to_vec();
    const ENUMERATE_LIMIT: usize = 1 << 16;
    if pairs <= ENUMERATE_LIMIT || free <= 4 * add {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !g.has_edge(a, b))
            .collect();
        edges.extend(sample(rng, candidates.len(), add).into_iter().map(|i| candidates[i]));
    } else {
        let mut chosen = HashSet::with_capacity(add);
        while chosen.len() < add {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let e = (a.min(b), a.max(b));
            if !g.has_edge(e.0, e.1) && chosen.insert(e) {
                edges.push(e);
            }
        }
    }
    g.with_edges_unchecked(edges)
}

/// Zeroes `floor(p · F)` uniformly chosen feature columns on every node.
pub fn feature_mask(g: &Graph, p: f64, rng: &mut StreamRng) -> Graph {
    let f = g.feature_dim();
    let k = portion(p, f);
    if k == 0 {
        return g.clone();
    }
    let mut masked = vec![false; f];
    for c in sample(rng, f, k) {
        masked[c] = true;
    }
    let feats = g.features();
    let mut data = feats.data().to_vec();
    for row in data.chunks_mut(f) {
        for (v, &m) in row.iter_mut().zip(&masked) {
            if m {
                *v = 0.0;
            }
        }
    }
    let features = Tensor::matrix(g.node_count(), f, data).expect("same shape");
    g.clone().with_features(features).expect("finite features")
}

/// Induced subgraph on the nodes visited by a random walk.
///
/// The walk starts at a uniform node and stops once `ceil((1 − p) · N)`
/// distinct nodes are collected or after `10 · N` steps. It never restarts,
/// so it stays inside the start node's component. A target covering every
/// node returns the graph unchanged.
pub fn subgraph_rw(g: &Graph, p: f64, rng: &mut StreamRng) -> Graph {
    let n = g.node_count();
    let target = (((1.0 - p) * n as f64) - COUNT_SLACK).ceil().max(1.0) as usize;
    if target >= n {
        return g.clone();
    }
    let adj = g.neighbors();
    let mut visited = vec![false; n];
    let mut current = rng.random_range(0..n);
    visited[current] = true;
    let mut count = 1;
    let budget = 10 * n;
    let mut steps = 0;
    while count < target && steps < budget {
        let nb = &adj[current];
        if nb.is_empty() {
            break;
        }
        current = nb[rng.random_range(0..nb.len())];
        if !visited[current] {
            visited[current] = true;
            count += 1;
        }
        steps += 1;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| visited[i]).collect();
    g.induced(&keep)
}

#[cfg(test)]
mod tests;
