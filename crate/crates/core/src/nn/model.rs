//! GCN/GIN graph classifiers with square `W1`, `W2` per layer.
//!
//! ```text
//! GCN: H' = σ(P H W1) W2            P = normalized adjacency (or Laplacian)
//! GIN: H' = σ(σ((1+ε) H + A H) W1) W2
//! ```
//! The input embedding and classifier head are affine; the `W1`/`W2` paths
//! carry no bias.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use super::tape::{BlockOperator, PoolMode, Segments, Tape, Var};
use crate::error::{CoreError, Result};
use crate::graph::{normalized_adjacency_with_self_loops, normalized_laplacian, BlockGraph, Graph};
use crate::rng::CounterRng;

/// A trainable parameter with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub values: Array2<f64>,
    pub grad: Array2<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(values: Array2<f64>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        Self {
            values,
            grad,
            requires_grad: true,
        }
    }

    pub fn frozen(values: Array2<f64>) -> Self {
        Self {
            requires_grad: false,
            ..Self::new(values)
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.values.nrows(), self.values.ncols()]
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut CounterRng) -> Self {
        Self::new(Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(-bound, bound)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Gcn,
    Gin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    NormAdjacency,
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: LayerKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub num_classes: usize,
    pub readout: PoolMode,
    pub propagation: Propagation,
    pub epsilon: f64,
    pub train_epsilon: bool,
}

impl ModelConfig {
    /// Defaults: 5 layers, 300 hidden units, sum readout for GIN and mean for GCN.
    pub fn new(kind: LayerKind, input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind,
            input_dim,
            hidden: 300,
            layers: 5,
            num_classes,
            readout: match kind {
                LayerKind::Gin => PoolMode::Sum,
                LayerKind::Gcn => PoolMode::Mean,
            },
            propagation: Propagation::NormAdjacency,
            epsilon: 0.0,
            train_epsilon: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(input: usize, output: usize, rng: &mut CounterRng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Tensor::uniform(input, output, bound, rng),
            bias: Tensor::uniform(1, output, bound, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub kind: LayerKind,
    pub w1: Tensor,
    pub w2: Tensor,
    /// `1x1`; frozen unless the model trains ε.
    pub epsilon: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: Linear,
    pub layers: Vec<GnnLayer>,
    pub head: Linear,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.hidden == 0 || config.num_classes == 0 {
            return Err(CoreError::dim("ModelConfig", "positive sizes", format!("{config:?}")));
        }
        let mut rng = CounterRng::new(seed).fork(0x1417);
        let h = config.hidden;
        let embed = Linear::init(config.input_dim, h, &mut rng);
        let bound = 1.0 / (h as f64).sqrt();
        let layers = (0..config.layers)
            .map(|_| {
                let eps = Array2::from_elem((1, 1), config.epsilon);
                GnnLayer {
                    kind: config.kind,
                    w1: Tensor::uniform(h, h, bound, &mut rng),
                    w2: Tensor::uniform(h, h, bound, &mut rng),
                    epsilon: if config.train_epsilon && config.kind == LayerKind::Gin {
                        Tensor::new(eps)
                    } else {
                        Tensor::frozen(eps)
                    },
                }
            })
            .collect();
        let head = Linear::init(h, config.num_classes, &mut rng);
        Ok(Self {
            config,
            embed,
            layers,
            head,
        })
    }

    /// All parameters in checkpoint order with stable names.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("embed.weight".to_string(), &self.embed.weight),
            ("embed.bias".to_string(), &self.embed.bias),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.w1"), &l.w1));
            out.push((format!("layers.{i}.w2"), &l.w2));
            out.push((format!("layers.{i}.epsilon"), &l.epsilon));
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed.weight, &mut self.embed.bias];
        for l in &mut self.layers {
            out.push(&mut l.w1);
            out.push(&mut l.w2);
            out.push(&mut l.epsilon);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|t| t.requires_grad)
            .map(|t| t.values.len())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Order-sensitive checksum of all parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.parameters() {
            for v in p.values.iter() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        h
    }

    /// Leaf variables for every parameter, in [`Model::parameters`] order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|p| tape.leaf(p.values.clone()))
            .collect()
    }

    /// Adds the gradients of `params` (from [`Model::bind`]) into the grad buffers.
    pub fn accumulate_grads(&mut self, grads: &super::tape::Gradients, params: &[Var]) {
        for (p, &v) in self.parameters_mut().into_iter().zip(params) {
            if !p.requires_grad {
                continue;
            }
            if let Some(g) = grads.get(v) {
                p.grad += g;
            }
        }
    }
}

/// Per-graph operators, computed once and shared between batches.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub norm_adjacency: Arc<Array2<f64>>,
    pub laplacian: Arc<Array2<f64>>,
    pub adjacency: Arc<Array2<f64>>,
}

impl GraphOperators {
    pub fn new(g: &Graph) -> Self {
        Self {
            norm_adjacency: Arc::new(normalized_adjacency_with_self_loops(g)),
            laplacian: Arc::new(normalized_laplacian(g)),
            adjacency: Arc::new(g.adjacency()),
        }
    }
}

/// A mini-batch assembled as one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Array2<f64>,
    pub norm_adjacency: Arc<BlockOperator>,
    pub laplacian: Arc<BlockOperator>,
    pub adjacency: Arc<BlockOperator>,
    pub segments: Arc<Segments>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let ops: Vec<GraphOperators> = graphs.iter().map(|g| GraphOperators::new(g)).collect();
        let refs: Vec<&GraphOperators> = ops.iter().collect();
        Self::with_operators(graphs, &refs)
    }

    pub fn from_block(block: &BlockGraph) -> Result<Self> {
        let graphs = block.split()?;
        let refs: Vec<&Graph> = graphs.iter().collect();
        Self::new(&refs)
    }

    pub fn with_operators(graphs: &[&Graph], ops: &[&GraphOperators]) -> Result<Self> {
        if graphs.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let m = graphs[0].feature_dim();
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut features = Array2::zeros((total, m));
        let mut off = 0;
        for g in graphs {
            if g.feature_dim() != m {
                return Err(CoreError::dim("GraphBatch feature dim", m, g.feature_dim()));
            }
            let n = g.num_nodes();
            features
                .slice_mut(ndarray::s![off..off + n, ..])
                .assign(&g.node_features);
            off += n;
        }
        let collect = |f: fn(&GraphOperators) -> &Arc<Array2<f64>>| {
            Arc::new(BlockOperator::new(ops.iter().map(|o| Arc::clone(f(o))).collect()))
        };
        Ok(Self {
            features,
            norm_adjacency: collect(|o| &o.norm_adjacency),
            laplacian: collect(|o| &o.laplacian),
            adjacency: collect(|o| &o.adjacency),
            segments: Arc::new(Segments::from_sizes(graphs.iter().map(|g| g.num_nodes()).collect())),
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn check_finite(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite(what.to_string()))
    }
}

fn check_square_weights(tape: &Tape, h: Var, w1: Var, w2: Var) -> Result<()> {
    let width = tape.value(h).ncols();
    for (name, w) in [("W1", w1), ("W2", w2)] {
        let d = tape.value(w).dim();
        if d != (width, width) {
            return Err(CoreError::dim(
                if name == "W1" { "layer W1" } else { "layer W2" },
                format!("{width}x{width}"),
                format!("{}x{}", d.0, d.1),
            ));
        }
    }
    Ok(())
}

fn activate(tape: &mut Tape, v: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(v),
        Activation::Identity => v,
    }
}

/// `σ(P H W1) W2`.
pub fn gcn_forward(
    tape: &mut Tape,
    h: Var,
    prop: &Arc<BlockOperator>,
    w1: Var,
    w2: Var,
    act: Activation,
) -> Result<Var> {
    check_square_weights(tape, h, w1, w2)?;
    if prop.rows() != tape.value(h).nrows() {
        return Err(CoreError::dim("gcn_forward propagation", tape.value(h).nrows(), prop.rows()));
    }
    let ph = tape.propagate(h, prop);
    let phw = tape.matmul(ph, w1);
    let a = activate(tape, phw, act);
    let out = tape.matmul(a, w2);
    check_finite(tape, out, "gcn_forward output")?;
    Ok(out)
}

/// `σ(σ((1+ε) H + A H) W1) W2`; `eps` is a `1x1` variable.
pub fn gin_forward(
    tape: &mut Tape,
    h: Var,
    adjacency: &Arc<BlockOperator>,
    eps: Var,
    w1: Var,
    w2: Var,
    act: Activation,
) -> Result<Var> {
    check_square_weights(tape, h, w1, w2)?;
    if adjacency.rows() != tape.value(h).nrows() {
        return Err(CoreError::dim("gin_forward adjacency", tape.value(h).nrows(), adjacency.rows()));
    }
    let agg = tape.gin_aggregate(h, adjacency, eps);
    let agg = activate(tape, agg, act);
    let z = tape.matmul(agg, w1);
    let z = activate(tape, z, act);
    let out = tape.matmul(z, w2);
    check_finite(tape, out, "gin_forward output")?;
    Ok(out)
}

/// Sum or mean of node rows.
pub fn readout(h: ArrayView2<f64>, mode: PoolMode) -> ndarray::Array1<f64> {
    let s = h.sum_axis(ndarray::Axis(0));
    match mode {
        PoolMode::Sum => s,
        PoolMode::Mean => s / h.nrows() as f64,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub logits: Var,
    /// Final-layer node embeddings, before readout.
    pub node_reps: Var,
    /// Per-graph pooled embeddings fed to the head.
    pub pooled: Var,
}

impl Model {
    /// Records a forward pass for `batch` on `tape`; `params` from [`Model::bind`].
    pub fn forward(&self, tape: &mut Tape, params: &[Var], batch: &GraphBatch) -> Result<ForwardOutput> {
        self.forward_layers(tape, params, batch).map(|(out, _)| out)
    }

    /// Like [`Model::forward`] but also returns the node representation after
    /// every GNN layer (index 0 = after the first layer).
    pub fn forward_layers(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &GraphBatch,
    ) -> Result<(ForwardOutput, Vec<Var>)> {
        if batch.features.ncols() != self.config.input_dim {
            return Err(CoreError::dim(
                "model input features",
                self.config.input_dim,
                batch.features.ncols(),
            ));
        }
        let x = tape.leaf(batch.features.clone());
        let xw = tape.matmul(x, params[0]);
        let mut h = tape.add_row(xw, params[1]);
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (w1, w2, eps) = (params[2 + 3 * i], params[3 + 3 * i], params[4 + 3 * i]);
            h = match layer.kind {
                LayerKind::Gcn => {
                    let prop = match self.config.propagation {
                        Propagation::NormAdjacency => &batch.norm_adjacency,
                        Propagation::Laplacian => &batch.laplacian,
                    };
                    gcn_forward(tape, h, prop, w1, w2, Activation::Relu)?
                }
                LayerKind::Gin => gin_forward(tape, h, &batch.adjacency, eps, w1, w2, Activation::Relu)?,
            };
            per_layer.push(h);
        }
        let pooled = tape.pool(h, &batch.segments, self.config.readout);
        let n = params.len();
        let hw = tape.matmul(pooled, params[n - 2]);
        let logits = tape.add_row(hw, params[n - 1]);
        check_finite(tape, logits, "logits")?;
        Ok((
            ForwardOutput {
                logits,
                node_reps: h,
                pooled,
            },
            per_layer,
        ))
    }

    /// Inference-mode forward returning `(logits, node_reps)`.
    pub fn forward_batch(&self, block: &BlockGraph) -> Result<(Array2<f64>, Array2<f64>)> {
        let batch = GraphBatch::from_block(block)?;
        self.infer(&batch)
    }

    pub fn infer(&self, batch: &GraphBatch) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::inference();
        let params = self.bind(&mut tape);
        let out = self.forward(&mut tape, &params, batch)?;
        Ok((tape.value(out.logits).clone(), tape.value(out.node_reps).clone()))
    }
}
