use std::fs;
use std::path::Path;

use proptest::prelude::*;

use super::*;

fn write_files(dir: &Path, name: &str, files: &[(&str, &str)]) {
    for (suffix, body) in files {
        fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
    }
}

fn assert_invariants(g: &Graph) {
    for &(a, b) in g.edges() {
        assert!(a < b && b < g.node_count());
    }
    assert!(g.edges().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(g.features().rows(), g.node_count());
    assert!(g.features().is_finite());
}

#[test]
fn loads_two_graph_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // graph 1: triangle on nodes 1..3, graph 2: edge 4-5; both directions listed
    write_files(
        dir.path(),
        "TOY",
        &[
            ("A", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n"),
            ("graph_indicator", "1\n1\n1\n2\n2\n"),
            ("graph_labels", "1\n2\n"),
        ],
    );
    let ds = load_tudataset(dir.path(), "TOY").unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.num_classes(), 2);
    let (g1, g2) = (&ds.graphs()[0], &ds.graphs()[1]);
    assert_eq!((g1.node_count(), g1.edge_count()), (3, 3));
    assert_eq!((g2.node_count(), g2.edge_count()), (2, 1));
    assert_eq!(g1.edges(), &[(0, 1), (0, 2), (1, 2)]);
    assert_eq!(g2.edges(), &[(0, 1)]);
    assert_eq!((g1.label(), g2.label()), (Some(0), Some(1)));
    // degree features, dataset max degree 2
    assert_eq!(ds.feature_dim(), 3);
    assert_eq!(g1.features().row(0), &[0.0, 0.0, 1.0]);
    assert_eq!(g2.features().row(1), &[0.0, 1.0, 0.0]);
    ds.graphs().iter().for_each(assert_invariants);
}

#[test]
fn node_labels_become_one_hot_features() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "NL",
        &[
            ("A", "1, 2\n"),
            ("graph_indicator", "1\n1\n2\n"),
            ("graph_labels", "-1\n5\n"),
            ("node_labels", "7\n3\n7\n"),
        ],
    );
    let ds = load_tudataset(dir.path(), "NL").unwrap();
    assert_eq!(ds.feature_dim(), 2);
    assert_eq!(ds.graphs()[0].features().data(), &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(ds.graphs()[1].features().data(), &[0.0, 1.0]);
    // -1 sorts before 5
    assert_eq!(ds.labels().unwrap(), vec![0, 1]);
}

#[test]
fn edgeless_single_graph() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "E",
        &[("A", ""), ("graph_indicator", "1\n1\n1\n1\n"), ("graph_labels", "0\n")],
    );
    let ds = load_tudataset(dir.path(), "E").unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.graphs()[0].node_count(), 4);
    assert_eq!(ds.graphs()[0].edge_count(), 0);
    assert_eq!(ds.num_classes(), 1);
}

#[test]
fn out_of_range_node_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "X",
        &[("A", "1, 2\n5, 1\n"), ("graph_indicator", "1\n1\n1\n1\n"), ("graph_labels", "0\n")],
    );
    let err = load_tudataset(dir.path(), "X").unwrap_err();
    match err {
        GraphError::UnknownNode { line, node, declared, .. } => {
            assert_eq!((line, node, declared), (2, 5, 4));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn parse_error_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "P",
        &[("A", "1, 2\n"), ("graph_indicator", "1\nx\n"), ("graph_labels", "0\n")],
    );
    let err = load_tudataset(dir.path(), "P").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("P_graph_indicator.txt:2"), "{msg}");
}

#[test]
fn missing_required_file() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), "M", &[("A", "1, 2\n"), ("graph_indicator", "1\n1\n")]);
    assert!(matches!(
        load_tudataset(dir.path(), "M"),
        Err(GraphError::MissingFile(p)) if p.ends_with("M_graph_labels.txt")
    ));
}

#[test]
fn self_loops_dropped_and_duplicates_collapsed() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "S",
        &[("A", "1, 1\n1, 2\n2, 1\n1, 2\n"), ("graph_indicator", "1\n1\n"), ("graph_labels", "3\n")],
    );
    let ds = load_tudataset(dir.path(), "S").unwrap();
    assert_eq!(ds.graphs()[0].edges(), &[(0, 1)]);
}

#[test]
fn graph_order_follows_indicator() {
    let dir = tempfile::tempdir().unwrap();
    // graph 2 appears first
    write_files(
        dir.path(),
        "O",
        &[("A", "1, 2\n"), ("graph_indicator", "2\n2\n1\n"), ("graph_labels", "10\n20\n")],
    );
    let ds = load_tudataset(dir.path(), "O").unwrap();
    assert_eq!(ds.graphs()[0].node_count(), 2);
    assert_eq!(ds.graphs()[0].label(), Some(1));
    assert_eq!(ds.graphs()[1].node_count(), 1);
}

#[test]
fn cross_graph_edge_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        "C",
        &[("A", "1, 3\n"), ("graph_indicator", "1\n1\n2\n"), ("graph_labels", "0\n1\n")],
    );
    assert!(matches!(load_tudataset(dir.path(), "C"), Err(GraphError::Parse { line: 1, .. })));
}

#[test]
fn degree_feature_examples() {
    let isolated = Graph::unfeatured(1, [], 1).unwrap();
    assert_eq!(degree_features(&isolated, 3).features().data(), &[1.0, 0.0, 0.0, 0.0]);

    let star = Graph::unfeatured(6, (1..6).map(|i| (0, i)), 1).unwrap();
    let f = degree_features(&star, 3);
    assert_eq!(f.features().row(0), &[0.0, 0.0, 0.0, 1.0]);
    assert_eq!(f.features().row(3), &[0.0, 1.0, 0.0, 0.0]);
    assert_eq!(f.edges(), star.edges());

    let tri = Graph::unfeatured(3, [(0, 1), (1, 2), (0, 2)], 1).unwrap();
    let f = degree_features(&tri, 3);
    for i in 0..3 {
        assert_eq!(f.features().row(i), &[0.0, 0.0, 1.0, 0.0]);
    }
}

#[test]
fn graph_constructor_validates() {
    assert!(matches!(Graph::unfeatured(2, [(0, 2)], 1), Err(GraphError::EdgeOutOfRange(0, 2, 2))));
    assert!(matches!(Graph::unfeatured(2, [(1, 1)], 1), Err(GraphError::SelfLoop(1))));
    assert!(matches!(Graph::unfeatured(0, [], 1), Err(GraphError::Empty)));
    let bad = Tensor::matrix(1, 1, vec![f64::NAN]).unwrap();
    assert!(matches!(Graph::new(1, [], bad, None), Err(GraphError::NonFiniteFeature)));
    let g = Graph::unfeatured(3, [(2, 0), (0, 2), (1, 0)], 1).unwrap();
    assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
}

#[test]
fn dataset_rejects_mixed_widths_and_bad_labels() {
    let a = Graph::unfeatured(1, [], 2).unwrap();
    let b = Graph::unfeatured(1, [], 3).unwrap();
    assert!(matches!(GraphDataset::new(vec![a.clone(), b], 1), Err(GraphError::FeatureDim { .. })));
    let labeled = a.with_label(Some(4));
    assert!(matches!(GraphDataset::new(vec![labeled], 2), Err(GraphError::LabelRange { .. })));
}

#[test]
fn synth_is_deterministic() {
    let a = synth_two_class(1, 7);
    let b = synth_two_class(1, 7);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    assert_ne!(a, synth_two_class(1, 8));
}

#[test]
fn synth_counts_and_density() {
    let ds = synth_two_class(50, 0);
    assert_eq!(ds.len(), 100);
    assert_eq!(ds.num_classes(), 2);
    let mean = |class: usize| {
        let gs: Vec<_> = ds.graphs().iter().filter(|g| g.label() == Some(class)).collect();
        gs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / gs.len() as f64
    };
    // mean pair count over N uniform in 10..=20 is 1210 / 11 = 110
    let expected = |p: f64| p * 110.0;
    let (m0, m1) = (mean(0), mean(1));
    assert!(m1 > m0);
    assert!((m0 - expected(synth::SPARSE_EDGE_PROB)).abs() < 0.2 * expected(synth::SPARSE_EDGE_PROB), "{m0}");
    assert!((m1 - expected(synth::DENSE_EDGE_PROB)).abs() < 0.1 * expected(synth::DENSE_EDGE_PROB), "{m1}");
    ds.graphs().iter().for_each(assert_invariants);
}

#[test]
fn synthetic_round_trip() {
    let ds = synth_two_class(5, 3);
    let dir = tempfile::tempdir().unwrap();
    write_tudataset(&ds, dir.path(), "SYN").unwrap();
    assert_eq!(load_tudataset(dir.path(), "SYN").unwrap(), ds);
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..8, 1usize..4).prop_flat_map(|(n, f)| {
        let pairs = prop::collection::vec((0..n, 0..n), 0..12);
        let feats = prop::collection::vec(-5.0f64..5.0, n * f);
        let label = 0usize..3;
        (pairs, feats, label).prop_map(move |(pairs, feats, label)| {
            let edges: Vec<_> = pairs.into_iter().filter(|(a, b)| a != b).collect();
            Graph::new(n, edges, Tensor::matrix(n, f, feats).unwrap(), Some(label)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_then_load_is_identity(graphs in prop::collection::vec(arb_graph(), 1..6)) {
        let f = graphs[0].feature_dim();
        let graphs: Vec<Graph> = graphs
            .into_iter()
            .map(|g| {
                let n = g.node_count();
                let data = (0..n * f).map(|i| (i as f64 * 0.37).sin()).collect();
                g.with_features(Tensor::matrix(n, f, data).unwrap()).unwrap()
            })
            .collect();
        // labels must be dense 0..C-1 for an exact round trip
        let mut present: Vec<usize> = graphs.iter().filter_map(Graph::label).collect();
        present.sort_unstable();
        present.dedup();
        let graphs: Vec<Graph> = graphs
            .into_iter()
            .map(|g| {
                let l = g.label().unwrap();
                let dense = present.iter().position(|&p| p == l).unwrap();
                g.with_label(Some(dense))
            })
            .collect();
        let ds = GraphDataset::new(graphs, present.len()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tudataset(&ds, dir.path(), "RT").unwrap();
        let back = load_tudataset(dir.path(), "RT").unwrap();
        back.graphs().iter().for_each(assert_invariants);
        prop_assert_eq!(back, ds);
    }
}
