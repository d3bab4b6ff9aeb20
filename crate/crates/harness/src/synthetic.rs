//! Synthetic graph-classification data with planted class motifs.
//!
//! Every graph is a sparse Erdős–Rényi graph on `min_nodes..=max_nodes` nodes
//! with `motifs` copies of its class motif planted on disjoint random node
//! sets. Class `c` uses a cycle of length `4 + c` when `c` is even and a
//! clique on `4 + (c - 1) / 2` nodes when `c` is odd, so class 0 carries
//! 4-cycles and class 1 carries 4-cliques. Node features are one-hot degrees
//! capped at `max_degree`. Labels are assigned round-robin, so classes are
//! exactly balanced whenever `num_graphs` is a multiple of `classes`.

use smoothgnn_core::graph::degree_onehot_features;
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::{Graph, GraphDataset};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_graphs: usize,
    pub classes: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub edge_prob: f64,
    pub motifs: usize,
    pub max_degree: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_graphs: 500,
            classes: 2,
            min_nodes: 12,
            max_nodes: 20,
            edge_prob: 0.1,
            motifs: 1,
            max_degree: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motif {
    Cycle(usize),
    Clique(usize),
}

impl Motif {
    pub fn for_class(class: usize) -> Self {
        if class % 2 == 0 {
            Motif::Cycle(4 + class)
        } else {
            Motif::Clique(4 + (class - 1) / 2)
        }
    }

    pub fn size(self) -> usize {
        match self {
            Motif::Cycle(k) | Motif::Clique(k) => k,
        }
    }

    /// Edges of the motif placed on `nodes` (in the given order).
    pub fn edges(self, nodes: &[usize]) -> Vec<(usize, usize)> {
        match self {
            Motif::Cycle(k) => (0..k).map(|i| (nodes[i], nodes[(i + 1) % k])).collect(),
            Motif::Clique(k) => (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .map(|(i, j)| (nodes[i], nodes[j]))
                .collect(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.num_graphs == 0 {
            return fail("synthetic.num_graphs must be positive".into());
        }
        if self.classes < 2 {
            return fail("synthetic.classes must be at least 2".into());
        }
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return fail(format!(
                "synthetic node range {}..={} is empty",
                self.min_nodes, self.max_nodes
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return fail(format!("synthetic.edge_prob {} outside [0, 1]", self.edge_prob));
        }
        if self.motifs == 0 {
            return fail("synthetic.motifs must be at least 1".into());
        }
        if self.max_degree == 0 {
            return fail("synthetic.max_degree must be at least 1".into());
        }
        let largest = (0..self.classes).map(|c| Motif::for_class(c).size()).max().unwrap_or(4);
        if self.min_nodes < self.motifs * largest {
            return fail(format!(
                "synthetic.min_nodes {} cannot hold {} disjoint motifs of size {largest}",
                self.min_nodes, self.motifs
            ));
        }
        Ok(())
    }
}

fn generate_graph(spec: &SyntheticSpec, index: usize) -> Result<Graph> {
    let mut rng = CounterRng::new(spec.seed).fork(index as u64);
    let label = index % spec.classes;
    let n = spec.min_nodes + rng.below(spec.max_nodes - spec.min_nodes + 1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(spec.edge_prob) {
                edges.push((i, j));
            }
        }
    }
    let motif = Motif::for_class(label);
    let mut nodes: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut nodes);
    for copy in nodes.chunks_exact(motif.size()).take(spec.motifs) {
        edges.extend(motif.edges(copy));
    }
    let skeleton = Graph::new(ndarray::Array2::zeros((n, 1)), edges, label, index)?;
    let features = degree_onehot_features(&skeleton, spec.max_degree);
    Ok(skeleton.with_features(features)?)
}

/// Deterministic dataset for `spec`; all graphs start in the training split.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<GraphDataset> {
    spec.validate()?;
    let graphs = (0..spec.num_graphs)
        .map(|i| generate_graph(spec, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDataset::new(graphs, spec.classes)?)
}
