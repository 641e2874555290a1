use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::graphdata::degree_features;

fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

fn triangle() -> Graph {
    degree_features(&Graph::unfeatured(3, [(0, 1), (1, 2), (0, 2)], 1).unwrap(), 3)
}

fn path(edges: usize) -> Graph {
    Graph::unfeatured(edges + 1, (0..edges).map(|i| (i, i + 1)), 2).unwrap()
}

fn check_invariants(g: &Graph) {
    assert!(g.node_count() >= 1);
    for &(a, b) in g.edges() {
        assert!(a < b && b < g.node_count());
    }
    assert!(g.edges().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(g.features().rows(), g.node_count());
}

#[test]
fn zero_ratio_is_identity() {
    let g = triangle();
    let mut r = rng(1);
    assert_eq!(node_drop(&g, 0.0, &mut r), g);
    assert_eq!(edge_drop(&g, 0.0, &mut r), g);
    assert_eq!(edge_add(&path(4), 0.0, &mut r), path(4));
    assert_eq!(feature_mask(&g, 0.0, &mut r), g);
    assert_eq!(subgraph_rw(&g, 0.0, &mut r), g);
}

#[test]
fn node_drop_on_triangle_matches_replayed_draw() {
    let g = triangle();
    let out = node_drop(&g, 0.34, &mut rng(11));
    // replay: floor(0.34 * 3) = 1 node removed
    let removed = sample(&mut rng(11), 3, 1).index(0);
    let survivors: Vec<usize> = (0..3).filter(|&i| i != removed).collect();
    assert_eq!(out.node_count(), 2);
    assert_eq!(out.edges(), &[(0, 1)]);
    assert_eq!(out.features().row(0), g.features().row(survivors[0]));
}

#[test]
fn node_drop_keeps_single_node() {
    let g = Graph::unfeatured(1, [], 2).unwrap();
    assert_eq!(node_drop(&g, 0.99, &mut rng(0)), g);
}

#[test]
fn edge_add_on_complete_graph_is_noop() {
    let k4 = Graph::unfeatured(4, (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))), 1).unwrap();
    for p in [0.1, 0.5, 0.9] {
        assert_eq!(edge_add(&k4, p, &mut rng(3)), k4);
    }
}

#[test]
fn edge_drop_on_path_matches_replayed_draw() {
    let g = path(4);
    let out = edge_drop(&g, 0.5, &mut rng(5));
    let mut dropped: Vec<usize> = sample(&mut rng(5), 4, 2).into_vec();
    dropped.sort_unstable();
    let expected: Vec<(usize, usize)> = (0..4)
        .filter(|i| !dropped.contains(i))
        .map(|i| (i, i + 1))
        .collect();
    assert_eq!(out.edge_count(), 2);
    assert_eq!(out.edges(), expected.as_slice());
    assert_eq!(out.node_count(), 5);
}

#[test]
fn edge_add_inserts_absent_edges() {
    let g = path(6);
    let out = edge_add(&g, 0.5, &mut rng(9));
    assert_eq!(out.edge_count(), 9);
    for &(a, b) in g.edges() {
        assert!(out.has_edge(a, b));
    }
}

#[test]
fn feature_mask_zeroes_whole_columns() {
    let data: Vec<f64> = (1..=12).map(f64::from).collect();
    let g = Graph::new(3, [(0, 1)], Tensor::matrix(3, 4, data).unwrap(), None).unwrap();
    let out = feature_mask(&g, 0.5, &mut rng(21));
    let mut cols: Vec<usize> = sample(&mut rng(21), 4, 2).into_vec();
    cols.sort_unstable();
    let zero_cols: Vec<usize> = (0..4)
        .filter(|&c| (0..3).all(|r| out.features().get(r, c) == 0.0))
        .collect();
    assert_eq!(zero_cols, cols);
    assert_eq!(out.edges(), g.edges());

    let zeros = Graph::unfeatured(3, [(0, 1)], 4).unwrap();
    assert_eq!(feature_mask(&zeros, 0.75, &mut rng(2)), zeros);
}

#[test]
fn subgraph_walk_stays_in_start_component() {
    let tri = |o: usize| [(o, o + 1), (o + 1, o + 2), (o, o + 2)];
    let g = Graph::unfeatured(6, tri(0).into_iter().chain(tri(3)), 1).unwrap();
    for seed in 0..20 {
        // replay the start node draw
        let start = rng(seed).random_range(0..6);
        let out = subgraph_rw(&g, 0.5, &mut rng(seed));
        assert_eq!(out.node_count(), 3);
        assert_eq!(out.edge_count(), 3, "seed {seed} start {start}");
    }
    let single = Graph::unfeatured(1, [], 1).unwrap();
    assert_eq!(subgraph_rw(&single, 0.5, &mut rng(0)), single);
}

#[test]
fn subgraph_walk_retains_start_component_features() {
    // features tag the component: 0 for nodes 0..3, 1 for nodes 3..6
    let feats = Tensor::matrix(6, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let g = Graph::new(6, [(0, 1), (1, 2), (3, 4), (4, 5)], feats, None).unwrap();
    for seed in 0..20 {
        let start = rng(seed).random_range(0..6);
        let out = subgraph_rw(&g, 0.5, &mut rng(seed));
        let tag = if start < 3 { 0.0 } else { 1.0 };
        assert!(out.features().data().iter().all(|&v| v == tag));
    }
}

#[test]
fn sample_pair_examples() {
    let g = path(9);
    let id = AugmentPolicy {
        first: AugmentSpec::identity(),
        second: AugmentSpec::identity(),
        seed: 0,
    };
    assert_eq!(sample_pair(&g, &id, &mut rng(0)), (g.clone(), g.clone()));

    let policy = AugmentPolicy::default();
    let a = sample_pair(&g, &policy, &mut rng(4));
    let b = sample_pair(&g, &policy, &mut rng(4));
    assert_eq!(a, b);
    // 10 nodes: floor(0.2 * 10) = 2 dropped; ceil(0.8 * 10) = 8 visited
    assert_eq!(a.0.node_count(), 8);
    assert_eq!(a.1.node_count(), 8);
    assert_eq!(policy.views(&g, 3, 7), policy.views(&g, 3, 7));
    assert_ne!(policy.views(&g, 3, 7), policy.views(&g, 4, 7));
}

#[test]
fn ratio_validation() {
    assert_eq!(AugmentSpec::new(AugmentKind::NodeDrop, 1.0), Err(AugmentError::Ratio(1.0)));
    assert!(AugmentSpec::new(AugmentKind::NodeDrop, -0.1).is_err());
    assert!(AugmentSpec::new(AugmentKind::EdgeAdd, 0.0).is_ok());
    let spec: AugmentSpec = serde_json::from_str(r#"{"kind": "node_drop", "p": 0.2}"#).unwrap();
    assert_eq!(spec, AugmentSpec::new(AugmentKind::NodeDrop, 0.2).unwrap());
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..15, 1usize..6).prop_flat_map(|(n, f)| {
        (
            prop::collection::vec((0..n, 0..n), 0..40),
            prop::collection::vec(-3.0f64..3.0, n * f),
        )
            .prop_map(move |(pairs, feats)| {
                let edges: Vec<_> = pairs.into_iter().filter(|(a, b)| a != b).collect();
                Graph::new(n, edges, Tensor::matrix(n, f, feats).unwrap(), Some(0)).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn counts_follow_floor_formulas(g in arb_graph(), p in 0.0f64..0.99, seed in any::<u64>()) {
        let before = g.clone();
        let n = g.node_count();
        let m = g.edge_count();
        let f = g.feature_dim();

        let out = node_drop(&g, p, &mut rng(seed));
        check_invariants(&out);
        prop_assert_eq!(out.node_count(), n - portion(p, n).min(n - 1));

        let out = edge_drop(&g, p, &mut rng(seed));
        check_invariants(&out);
        prop_assert_eq!(out.edge_count(), m - portion(p, m));

        let out = edge_add(&g, p, &mut rng(seed));
        check_invariants(&out);
        let free = n * (n - 1) / 2 - m;
        prop_assert_eq!(out.edge_count(), m + portion(p, m).min(free));

        let out = feature_mask(&g, p, &mut rng(seed));
        check_invariants(&out);
        let zeroed = (0..f).filter(|&c| (0..n).all(|r| out.features().get(r, c) == 0.0)).count();
        let originally = (0..f).filter(|&c| (0..n).all(|r| g.features().get(r, c) == 0.0)).count();
        prop_assert!(zeroed >= portion(p, f).max(originally));
        prop_assert!(zeroed <= portion(p, f) + originally);

        let out = subgraph_rw(&g, p, &mut rng(seed));
        check_invariants(&out);
        prop_assert!(out.node_count() <= n);

        prop_assert_eq!(g, before);
    }
}
