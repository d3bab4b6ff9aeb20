//! Graphs, labelled datasets and block-diagonal batching.
//!
//! Edges are stored once as `(i, j)` with `i < j` and expanded symmetrically
//! when a dense matrix is materialized. Isolated nodes get an all-zero row and
//! column in the normalized Laplacian, so they carry no Dirichlet energy.

use std::collections::BTreeSet;

use ndarray::{s, Array2};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub node_features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    pub label: usize,
    pub graph_id: usize,
}

impl Graph {
    /// Builds a graph, canonicalizing edges to `i < j` and dropping duplicates.
    /// Self-loops, out-of-range endpoints and non-finite features are rejected.
    pub fn new(
        node_features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        label: usize,
        graph_id: usize,
    ) -> Result<Self> {
        let n = node_features.nrows();
        if n == 0 {
            return Err(CoreError::InvalidGraph("graph has no nodes".into()));
        }
        if node_features.ncols() == 0 {
            return Err(CoreError::InvalidGraph("feature dimension is zero".into()));
        }
        if node_features.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidGraph("non-finite node feature".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(CoreError::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            node_features,
            edges: set.into_iter().collect(),
            label,
            graph_id,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    /// Canonical edge list, sorted, each undirected edge once with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut a = Array2::zeros((n, n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    pub fn with_features(&self, node_features: Array2<f64>) -> Result<Self> {
        if node_features.nrows() != self.num_nodes() {
            return Err(CoreError::dim(
                "Graph::with_features",
                self.num_nodes(),
                node_features.nrows(),
            ));
        }
        Graph::new(node_features, self.edges.iter().copied(), self.label, self.graph_id)
    }
}

/// `I - D^{-1/2} A D^{-1/2}` with zero rows/columns for isolated nodes.
pub fn normalized_laplacian(g: &Graph) -> Array2<f64> {
    laplacian_from_edges(g.num_nodes(), g.edges())
}

fn laplacian_from_edges(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut deg = vec![0usize; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut lap = Array2::zeros((n, n));
    for (i, &d) in deg.iter().enumerate() {
        if d > 0 {
            lap[[i, i]] = 1.0;
        }
    }
    for &(i, j) in edges {
        // same product in both slots keeps the matrix bitwise symmetric
        let w = -(inv_sqrt[i] * inv_sqrt[j]);
        lap[[i, j]] = w;
        lap[[j, i]] = w;
    }
    lap
}

/// GCN propagation operator `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree of `A + I`.
pub fn normalized_adjacency_with_self_loops(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = inv_sqrt[i] * inv_sqrt[i];
    }
    for &(i, j) in g.edges() {
        let w = inv_sqrt[i] * inv_sqrt[j];
        m[[i, j]] = w;
        m[[j, i]] = w;
    }
    m
}

/// One-hot encoding of `min(degree, max_degree)`, width `max_degree + 1`.
pub fn degree_onehot_features(g: &Graph, max_degree: usize) -> Array2<f64> {
    assert!(max_degree >= 1, "max_degree must be at least 1");
    let deg = g.degrees();
    let mut out = Array2::zeros((deg.len(), max_degree + 1));
    for (i, &d) in deg.iter().enumerate() {
        out[[i, d.min(max_degree)]] = 1.0;
    }
    out
}

/// Several graphs viewed as one graph with disconnected components.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGraph {
    pub features: Array2<f64>,
    /// Edges in global node numbering, each within a single component.
    pub edges: Vec<(usize, usize)>,
    pub component_offsets: Vec<usize>,
    pub component_sizes: Vec<usize>,
    /// Labels and ids of the components, in order.
    pub labels: Vec<usize>,
    pub graph_ids: Vec<usize>,
}

pub fn block_diagonal(graphs: &[&Graph]) -> Result<BlockGraph> {
    let first = graphs.first().ok_or(CoreError::EmptyDataset)?;
    let m = first.feature_dim();
    if let Some(bad) = graphs.iter().find(|g| g.feature_dim() != m) {
        return Err(CoreError::dim("block_diagonal feature dim", m, bad.feature_dim()));
    }
    let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let mut features = Array2::zeros((total, m));
    let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.edges().len()).sum());
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut sizes = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for g in graphs {
        let n = g.num_nodes();
        features
            .slice_mut(s![offset..offset + n, ..])
            .assign(&g.node_features);
        edges.extend(g.edges().iter().map(|&(a, b)| (a + offset, b + offset)));
        offsets.push(offset);
        sizes.push(n);
        offset += n;
    }
    Ok(BlockGraph {
        features,
        edges,
        component_offsets: offsets,
        component_sizes: sizes,
        labels: graphs.iter().map(|g| g.label).collect(),
        graph_ids: graphs.iter().map(|g| g.graph_id).collect(),
    })
}

impl BlockGraph {
    pub fn total_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_components(&self) -> usize {
        self.component_sizes.len()
    }

    /// View of the whole block graph as a single [`Graph`].
    pub fn as_graph(&self) -> Result<Graph> {
        Graph::new(self.features.clone(), self.edges.iter().copied(), 0, 0)
    }

    pub fn normalized_laplacian(&self) -> Array2<f64> {
        laplacian_from_edges(self.total_nodes(), &self.edges)
    }

    /// Splits back into the component graphs.
    pub fn split(&self) -> Result<Vec<Graph>> {
        let mut per: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.num_components()];
        for &(a, b) in &self.edges {
            let c = self.component_of(a);
            if self.component_of(b) != c {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({a}, {b}) crosses a component boundary"
                )));
            }
            let off = self.component_offsets[c];
            per[c].push((a - off, b - off));
        }
        per.into_iter()
            .enumerate()
            .map(|(c, edges)| {
                let off = self.component_offsets[c];
                let n = self.component_sizes[c];
                Graph::new(
                    self.features.slice(s![off..off + n, ..]).to_owned(),
                    edges,
                    self.labels[c],
                    self.graph_ids[c],
                )
            })
            .collect()
    }

    fn component_of(&self, node: usize) -> usize {
        self.component_offsets.partition_point(|&o| o <= node) - 1
    }
}

/// A labelled graph collection with noise bookkeeping and a train/test split.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub true_labels: Vec<usize>,
    pub assigned_labels: Vec<usize>,
    pub noise_mask: Vec<bool>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl GraphDataset {
    /// Clean dataset: assigned labels equal true labels, everything in `train`.
    pub fn new(graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        for g in &graphs {
            if g.label >= num_classes {
                return Err(CoreError::LabelOutOfRange {
                    label: g.label,
                    classes: num_classes,
                });
            }
        }
        let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
        let n = graphs.len();
        Ok(Self {
            graphs,
            num_classes,
            assigned_labels: labels.clone(),
            true_labels: labels,
            noise_mask: vec![false; n],
            train: (0..n).collect(),
            test: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }

    pub fn set_split(&mut self, train: Vec<usize>, test: Vec<usize>) -> Result<()> {
        let n = self.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n {
                return Err(CoreError::InvalidGraph(format!("split index {i} out of range")));
            }
            if seen[i] {
                return Err(CoreError::InvalidGraph(format!(
                    "index {i} appears twice in the split"
                )));
            }
            seen[i] = true;
        }
        self.train = train;
        self.test = test;
        Ok(())
    }

    /// Overwrites assigned labels and recomputes the noise mask.
    pub fn set_assigned_labels(&mut self, assigned: Vec<usize>) -> Result<()> {
        if assigned.len() != self.len() {
            return Err(CoreError::dim("set_assigned_labels", self.len(), assigned.len()));
        }
        if let Some(&label) = assigned.iter().find(|&&l| l >= self.num_classes) {
            return Err(CoreError::LabelOutOfRange {
                label,
                classes: self.num_classes,
            });
        }
        self.noise_mask = assigned
            .iter()
            .zip(&self.true_labels)
            .map(|(a, t)| a != t)
            .collect();
        self.assigned_labels = assigned;
        Ok(())
    }

    /// Checks the dataset invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.true_labels.len() != n || self.assigned_labels.len() != n || self.noise_mask.len() != n
        {
            return Err(CoreError::dim("GraphDataset label vectors", n, self.true_labels.len()));
        }
        for i in 0..n {
            if self.noise_mask[i] != (self.assigned_labels[i] != self.true_labels[i]) {
                return Err(CoreError::InvalidGraph(format!("noise mask wrong at {i}")));
            }
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || seen[i] {
                return Err(CoreError::InvalidGraph(format!("bad split index {i}")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn mean_nodes(&self) -> f64 {
        self.graphs.iter().map(|g| g.num_nodes() as f64).sum::<f64>() / self.len() as f64
    }
}
