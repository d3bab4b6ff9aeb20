#![allow(dead_code)]

use ndarray::Array2;
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::Graph;

pub fn random_graph(rng: &mut CounterRng, nodes: usize, dim: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    let feats = random_matrix(rng, nodes, dim);
    Graph::new(feats, edges, 0, 0).unwrap()
}

pub fn random_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

pub fn random_symmetric(rng: &mut CounterRng, n: usize) -> Array2<f64> {
    let a = random_matrix(rng, n, n);
    (&a + &a.t()) * 0.5
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
