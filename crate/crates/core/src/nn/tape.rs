//! Reverse-mode autodiff over dense 2-D arrays.
//!
//! A [`Tape`] appends one node per operation. Values are always kept; parent
//! links are only kept when the tape is recording. Scalars are `1x1` arrays.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use crate::error::{CoreError, Result};

/// Block-diagonal linear operator: each block acts on its own row range.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    blocks: Vec<(usize, Arc<Array2<f64>>)>,
    rows: usize,
}

impl BlockOperator {
    /// Blocks are placed consecutively along the diagonal.
    pub fn new(blocks: Vec<Arc<Array2<f64>>>) -> Self {
        let mut offset = 0;
        let mut placed = Vec::with_capacity(blocks.len());
        for b in blocks {
            assert_eq!(b.nrows(), b.ncols(), "operator blocks must be square");
            let n = b.nrows();
            placed.push((offset, b));
            offset += n;
        }
        Self {
            blocks: placed,
            rows: offset,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        self.apply_impl(h, false)
    }

    pub fn apply_transpose(&self, h: &Array2<f64>) -> Array2<f64> {
        self.apply_impl(h, true)
    }

    fn apply_impl(&self, h: &Array2<f64>, transpose: bool) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        self.accumulate_into(h, &mut out, transpose);
        out
    }

    /// `out += B h` (or `Bᵀ h`), one row axpy per non-zero block entry.
    /// Graph operators are mostly zeros, so this beats a dense product on
    /// every block. `out` must be in standard layout.
    fn accumulate_into(&self, h: &Array2<f64>, out: &mut Array2<f64>, transpose: bool) {
        assert_eq!(h.nrows(), self.rows, "operator rows");
        assert_eq!(h.raw_dim(), out.raw_dim(), "operator output shape");
        let m = h.ncols();
        let h = h.as_standard_layout();
        let src = h.as_slice().expect("standard layout is contiguous");
        let dst = out.as_slice_mut().expect("output must be in standard layout");
        for (off, block) in &self.blocks {
            let n = block.nrows();
            for i in 0..n {
                let out_row = &mut dst[(off + i) * m..(off + i + 1) * m];
                for j in 0..n {
                    let a = if transpose { block[[j, i]] } else { block[[i, j]] };
                    if a == 0.0 {
                        continue;
                    }
                    let in_row = &src[(off + j) * m..(off + j + 1) * m];
                    for (o, x) in out_row.iter_mut().zip(in_row) {
                        *o += a * x;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.rows));
        for (off, block) in &self.blocks {
            let n = block.nrows();
            out.slice_mut(s![*off..*off + n, *off..*off + n]).assign(block.as_ref());
        }
        out
    }
}

/// Consecutive row segments, one per graph in a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Segments {
    pub fn from_sizes(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Self { offsets, sizes }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Propagate(Var, Arc<BlockOperator>),
    /// `(1 + eps) h + A h` with a `1x1` variable `eps`.
    GinAggregate(Var, Arc<BlockOperator>, Var),
    Pool(Var, Arc<Segments>, PoolMode),
    Sum(Var),
    HalfSquaredNorm(Var),
    /// Scalar whose gradient with respect to `input` was computed eagerly.
    Fused { input: Var, grad: Array2<f64> },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that keeps values only; `backward` fails on it.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a + 1ᵀ row`, broadcasting a `1 x n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    /// Multiplies by the `1x1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let c = self.scalar(s);
        let v = self.value(a) * c;
        self.push(v, Op::ScaleBy(a, s))
    }

    pub fn propagate(&mut self, a: Var, op: &Arc<BlockOperator>) -> Var {
        let v = op.apply(self.value(a));
        self.push(v, Op::Propagate(a, Arc::clone(op)))
    }

    /// `(1 + eps) · a + op · a`, where `eps` is a `1x1` variable.
    pub fn gin_aggregate(&mut self, a: Var, op: &Arc<BlockOperator>, eps: Var) -> Var {
        let c = 1.0 + self.scalar(eps);
        let h = self.value(a);
        let mut out = Array2::zeros(h.raw_dim());
        out.zip_mut_with(h, |o, &x| *o = c * x);
        op.accumulate_into(h, &mut out, false);
        self.push(out, Op::GinAggregate(a, Arc::clone(op), eps))
    }

    pub fn pool(&mut self, a: Var, segments: &Arc<Segments>, mode: PoolMode) -> Var {
        let h = self.value(a);
        let mut out = Array2::zeros((segments.len(), h.ncols()));
        for (i, (&off, &n)) in segments.offsets.iter().zip(&segments.sizes).enumerate() {
            let mut row = h.slice(s![off..off + n, ..]).sum_axis(Axis(0));
            if mode == PoolMode::Mean {
                row /= n as f64;
            }
            out.row_mut(i).assign(&row);
        }
        self.push(out, Op::Pool(a, Arc::clone(segments), mode))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// `||a||² / 2`.
    pub fn half_squared_norm(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), 0.5 * self.value(a).iter().map(|x| x * x).sum::<f64>());
        self.push(v, Op::HalfSquaredNorm(a))
    }

    /// Records a scalar `value` whose gradient with respect to `input` is `grad`.
    pub fn fused_scalar(&mut self, input: Var, value: f64, grad: Array2<f64>) -> Var {
        debug_assert_eq!(grad.raw_dim(), self.value(input).raw_dim());
        self.push(Array2::from_elem((1, 1), value), Op::Fused { input, grad })
    }

    /// Accumulates `d loss / d node` for every node reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(CoreError::NotRecorded);
        }
        if self.value(loss).dim() != (1, 1) {
            return Err(CoreError::dim("backward loss", "1x1", format!("{:?}", self.value(loss).dim())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let out = &self.nodes[idx].value;
                    let mut ga = g;
                    ga.zip_mut_with(out, |gi, &o| {
                        if o <= 0.0 {
                            *gi = 0.0;
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::ScaleBy(a, s) => {
                    let gs: f64 = g.iter().zip(self.value(*a).iter()).map(|(x, y)| x * y).sum();
                    accumulate(&mut grads, *s, Array2::from_elem((1, 1), gs));
                    accumulate(&mut grads, *a, g * self.scalar(*s));
                }
                Op::Propagate(a, op) => accumulate(&mut grads, *a, op.apply_transpose(&g)),
                Op::GinAggregate(a, op, eps) => {
                    let c = 1.0 + self.scalar(*eps);
                    let ge: f64 = g.iter().zip(self.value(*a).iter()).map(|(x, y)| x * y).sum();
                    let mut ga = Array2::zeros(g.raw_dim());
                    ga.zip_mut_with(&g, |o, &x| *o = c * x);
                    op.accumulate_into(&g, &mut ga, true);
                    accumulate(&mut grads, *eps, Array2::from_elem((1, 1), ge));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Pool(a, segments, mode) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (i, (&off, &n)) in segments.offsets.iter().zip(&segments.sizes).enumerate() {
                        let mut row = g.row(i).to_owned();
                        if *mode == PoolMode::Mean {
                            row /= n as f64;
                        }
                        for r in off..off + n {
                            ga.row_mut(r).assign(&row);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::HalfSquaredNorm(a) => accumulate(&mut grads, *a, self.value(*a) * g[[0, 0]]),
                Op::Fused { input, grad } => accumulate(&mut grads, *input, grad * g[[0, 0]]),
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

/// Gradients produced by [`Tape::backward`]. Only leaves keep their gradient.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
