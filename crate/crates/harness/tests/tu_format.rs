//! Benchmark text-format ingestion against hand-written fixtures.

use std::fs;
use std::path::Path;

use ndarray::{array, Array2};
use smoothgnn_harness::tu::{load_tu_dataset, write_tu_dataset, DEGREE_CAP};
use smoothgnn_harness::{gen_synthetic, HarnessError, SyntheticSpec};

fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
    fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
}

/// Graph 1: triangle on nodes 1..3 plus a pendant node 4 attached to 3.
/// Graph 2: a single edge 5-6. Graph labels are -1 and 1, node labels 7/9.
fn two_graph_fixture(dir: &Path, with_node_labels: bool) {
    write(
        dir,
        "FIX",
        "A",
        "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n3, 4\n4, 3\n5, 6\n6, 5\n",
    );
    write(dir, "FIX", "graph_indicator", "1\n1\n1\n1\n2\n2\n");
    write(dir, "FIX", "graph_labels", "-1\n1\n");
    if with_node_labels {
        write(dir, "FIX", "node_labels", "7\n9\n7\n9\n9\n7\n");
    }
}

fn dense(g: &smoothgnn_core::Graph) -> Array2<f64> {
    g.adjacency()
}

#[test]
fn two_graph_fixture_loads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    let ds = load_tu_dataset(dir.path()).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.num_classes, 2);
    assert_eq!(ds.true_labels, vec![0, 1]);
    assert_eq!(ds.assigned_labels, ds.true_labels);
    assert!(ds.noise_mask.iter().all(|&m| !m));

    let a0 = array![
        [0.0, 1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0]
    ];
    assert_eq!(dense(&ds.graphs[0]), a0);
    assert_eq!(dense(&ds.graphs[1]), array![[0.0, 1.0], [1.0, 0.0]]);
    // raw node labels 7 and 9 become columns 0 and 1
    assert_eq!(
        ds.graphs[0].node_features,
        array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]
    );
    assert_eq!(ds.graphs[1].node_features, array![[0.0, 1.0], [1.0, 0.0]]);
    assert_eq!(ds.graphs[0].edges().len(), 4, "both directions collapse to one edge");
}

#[test]
fn missing_node_labels_fall_back_to_degree_onehot() {
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), false);
    let ds = load_tu_dataset(dir.path()).unwrap();
    let x = &ds.graphs[0].node_features;
    assert_eq!(x.ncols(), DEGREE_CAP + 1);
    let degrees = [2, 2, 3, 1];
    for (row, &d) in x.rows().into_iter().zip(&degrees) {
        let hot: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(k, _)| k).collect();
        assert_eq!(hot, vec![d]);
        assert_eq!(row.sum(), 1.0);
    }
}

#[test]
fn duplicate_lines_and_self_loops_are_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    let edges = fs::read_to_string(dir.path().join("FIX_A.txt")).unwrap() + "1, 2\n4, 4\n";
    write(dir.path(), "FIX", "A", &edges);
    let ds = load_tu_dataset(dir.path()).unwrap();
    assert_eq!(ds.graphs[0].edges().len(), 4);
}

fn expect_data_error(dir: &Path) -> String {
    match load_tu_dataset(dir) {
        Err(e @ HarnessError::Data(_)) => e.to_string(),
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn missing_mandatory_files_are_errors() {
    for missing in ["A", "graph_labels", "graph_indicator"] {
        let dir = tempfile::tempdir().unwrap();
        two_graph_fixture(dir.path(), true);
        fs::remove_file(dir.path().join(format!("FIX_{missing}.txt"))).unwrap();
        expect_data_error(dir.path());
    }
}

#[test]
fn non_integer_tokens_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    write(dir.path(), "FIX", "graph_indicator", "1\n1\nx\n1\n2\n2\n");
    assert!(expect_data_error(dir.path()).contains("non-integer"));
}

#[test]
fn inconsistent_counts_are_errors() {
    // node label file one line short
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    write(dir.path(), "FIX", "node_labels", "7\n9\n7\n9\n9\n");
    expect_data_error(dir.path());

    // edge references a node beyond the indicator
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    write(dir.path(), "FIX", "A", "1, 2\n2, 7\n");
    expect_data_error(dir.path());

    // indicator references a graph without a label
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    write(dir.path(), "FIX", "graph_indicator", "1\n1\n1\n1\n3\n3\n");
    expect_data_error(dir.path());

    // edge across two graphs
    let dir = tempfile::tempdir().unwrap();
    two_graph_fixture(dir.path(), true);
    write(dir.path(), "FIX", "A", "1, 5\n");
    expect_data_error(dir.path());
}

#[test]
fn written_synthetic_data_reloads_with_the_same_structure() {
    let spec = SyntheticSpec {
        num_graphs: 20,
        ..SyntheticSpec::default()
    };
    let ds = gen_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_tu_dataset(&ds, dir.path(), "SYN").unwrap();
    let back = load_tu_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.true_labels, ds.true_labels);
    for (a, b) in ds.graphs.iter().zip(&back.graphs) {
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.adjacency(), b.adjacency());
    }
}
