use rand::Rng;

use super::{Graph, GraphDataset};
use crate::rng::{stream, tag};

const MIN_NODES: usize = 10;
const MAX_NODES: usize = 20;
pub(crate) const SPARSE_EDGE_PROB: f64 = 0.1;
pub(crate) const DENSE_EDGE_PROB: f64 = 0.5;

/// Two-class dataset separable by edge density: class 0 draws each node pair
/// with probability 0.1, class 1 with probability 0.5. Node counts are
/// uniform in `10..=20`. Graphs are ordered class 0 first, then class 1.
pub fn synth_two_class(n_per_class: usize, seed: u64) -> GraphDataset {
    assert!(n_per_class >= 1, "n_per_class must be at least 1");
    let mut graphs = Vec::with_capacity(2 * n_per_class);
    for (class, p) in [(0usize, SPARSE_EDGE_PROB), (1, DENSE_EDGE_PROB)] {
        for i in 0..n_per_class {
            let mut rng = stream(seed, &[tag::SYNTH, class as u64, i as u64]);
            let n = rng.random_range(MIN_NODES..=MAX_NODES);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            let g = Graph::unfeatured(n, edges, 0)
                .expect("generated edges are in range")
                .with_label(Some(class));
            graphs.push(g);
        }
    }
    GraphDataset::with_degree_features(graphs, 2).expect("uniform feature width")
}
