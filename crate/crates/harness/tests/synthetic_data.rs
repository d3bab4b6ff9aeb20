//! The synthetic generator: balance, determinism and separability checked by
//! a clique-counting classifier that never looks at the generator's internals.

use smoothgnn_core::Graph;
use smoothgnn_harness::{gen_synthetic, SyntheticSpec};

fn adjacency_sets(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut adj = vec![vec![false; n]; n];
    for &(i, j) in g.edges() {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    adj
}

/// Number of 4-cliques, by brute force over node quadruples.
fn count_k4(g: &Graph) -> usize {
    let adj = adjacency_sets(g);
    let n = adj.len();
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            if !adj[a][b] {
                continue;
            }
            for c in b + 1..n {
                if !(adj[a][c] && adj[b][c]) {
                    continue;
                }
                for d in c + 1..n {
                    if adj[a][d] && adj[b][d] && adj[c][d] {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

/// Predicts the clique class exactly when a 4-clique is present.
fn oracle(graphs: &[(&Graph, usize)]) -> f64 {
    let hits = graphs
        .iter()
        .filter(|&&(g, y)| usize::from(count_k4(g) > 0) == y)
        .count();
    hits as f64 / graphs.len() as f64
}

#[test]
fn labels_are_exactly_balanced() {
    let ds = gen_synthetic(&SyntheticSpec {
        num_graphs: 100,
        ..SyntheticSpec::default()
    })
    .unwrap();
    assert_eq!(ds.len(), 100);
    assert_eq!(ds.true_labels.iter().filter(|&&y| y == 0).count(), 50);
    assert_eq!(ds.true_labels.iter().filter(|&&y| y == 1).count(), 50);
    let spec = SyntheticSpec::default();
    for g in &ds.graphs {
        assert!((spec.min_nodes..=spec.max_nodes).contains(&g.num_nodes()));
        assert_eq!(g.node_features.ncols(), spec.max_degree + 1);
    }
}

#[test]
fn same_seed_same_dataset_and_different_seed_differs() {
    let spec = SyntheticSpec {
        num_graphs: 50,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let a = gen_synthetic(&spec).unwrap();
    assert_eq!(a.graphs, gen_synthetic(&spec).unwrap().graphs);
    let b = gen_synthetic(&SyntheticSpec { seed: 5, ..spec }).unwrap();
    assert_ne!(a.graphs, b.graphs);
}

#[test]
fn every_clique_graph_contains_a_k4_and_cycle_graphs_a_four_cycle() {
    let ds = gen_synthetic(&SyntheticSpec::default()).unwrap();
    for g in &ds.graphs {
        if g.label == 1 {
            assert!(count_k4(g) >= 1, "graph {} lacks its clique", g.graph_id);
        } else {
            let adj = adjacency_sets(g);
            let n = adj.len();
            // a 4-cycle a-b-c-d-a exists iff two nodes share two common neighbours
            let has_c4 = (0..n).any(|a| {
                (a + 1..n).any(|c| (0..n).filter(|&x| adj[a][x] && adj[c][x]).count() >= 2)
            });
            assert!(has_c4, "graph {} lacks its cycle", g.graph_id);
        }
    }
}

#[test]
fn combinatorial_oracle_separates_classes() {
    let ds = gen_synthetic(&SyntheticSpec::default()).unwrap();
    assert_eq!(ds.len(), 500);
    let labelled: Vec<(&Graph, usize)> = ds.graphs.iter().zip(ds.true_labels.iter().copied()).collect();
    let acc = oracle(&labelled);
    assert!(acc >= 0.95, "oracle accuracy {acc}");
}
