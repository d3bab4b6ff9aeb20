//! Cross-entropy and the GCOD noise-robust loss.
//!
//! GCOD keeps one parameter `u_i ∈ [0, 1]` per training graph. For a batch of
//! `B` graphs with logits `z_i`, pooled embeddings `h_i`, assigned label `y_i`,
//! training accuracy `a` of the previous epoch and class centroids `c_k`:
//!
//! ```text
//! s_i  = max(0, cos(h_i, c_{y_i}))                       soft target weight
//! L1   = 1/B Σ_i -s_i · log softmax(z_i + a·u_i·e_{y_i})[y_i]
//! L2   = 1/B Σ_i 1/C · || onehot(argmax z_i) + u_i·e_{y_i} - e_{y_i} ||²
//! L3   = (1 - a) · 1/B Σ_i q_i · (log q_i - log sigmoid(z_i[y_i])),   q_i = 1/(1 + u_i)
//!
//! L_model = w1·L1 + w3·L3      differentiated w.r.t. the model, u held fixed
//! L_u     = w2·L2 + w3·L3      differentiated w.r.t. u, model outputs held fixed
//! ```
//! With weights `(1, 0, 0)`, hard targets (`s_i = 1`) and `u = 0` the model
//! objective is plain cross-entropy on the assigned labels.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{CoreError, Result};
use crate::nn::{adam_step, AdamState, GraphBatch, Model, Tape, Var};

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(CoreError::dim("labels", rows, labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(CoreError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

fn softmax_row(z: ArrayView1<f64>) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(z: &[f64], k: usize) -> f64 {
    let mut arg = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[arg] {
            arg = i;
        }
    }
    let max = z[arg];
    // exp(0) of the max term is pulled out so tiny tails survive via ln_1p
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, v)| (v - max).exp())
        .sum();
    z[k] - max - rest.ln_1p()
}

/// `log(1 / (1 + e^{-x}))` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let z = tape.value(logits);
    let (b, c) = z.dim();
    check_labels(labels, b, c)?;
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row: Vec<f64> = z.row(i).to_vec();
        total -= log_softmax_at(&row, y);
        let p = softmax_row(z.row(i));
        for k in 0..c {
            grad[[i, k]] = (p[k] - if k == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    let loss = total / b as f64;
    if !loss.is_finite() {
        return Err(CoreError::NonFinite("cross entropy".into()));
    }
    Ok(tape.fused_scalar(logits, loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcodConfig {
    pub l1_weight: f64,
    pub l2_weight: f64,
    pub l3_weight: f64,
    pub u_lr: f64,
    pub soft_targets: bool,
}

impl Default for GcodConfig {
    fn default() -> Self {
        Self {
            l1_weight: 1.0,
            l2_weight: 1.0,
            l3_weight: 1.0,
            u_lr: 1.0,
            soft_targets: true,
        }
    }
}

impl GcodConfig {
    /// The configuration under which the model objective is plain cross-entropy.
    pub fn ce_only() -> Self {
        Self {
            l1_weight: 1.0,
            l2_weight: 0.0,
            l3_weight: 0.0,
            u_lr: 1.0,
            soft_targets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcodState {
    pub config: GcodConfig,
    /// One entry per training sample, in training-split order.
    pub u: Vec<f64>,
    /// Per-class mean embedding of training graphs (by assigned label).
    pub class_stats: Array2<f64>,
    pub class_present: Vec<bool>,
    /// Training accuracy against assigned labels from the previous epoch.
    pub train_acc: f64,
}

impl GcodState {
    pub fn new(config: GcodConfig, train_size: usize, num_classes: usize, embed_dim: usize) -> Self {
        Self {
            config,
            u: vec![0.0; train_size],
            class_stats: Array2::zeros((num_classes, embed_dim)),
            class_present: vec![false; num_classes],
            train_acc: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcodDiagnostics {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub per_sample_l1: Vec<f64>,
    pub per_sample_l2: Vec<f64>,
    pub per_sample_l3: Vec<f64>,
    pub soft_targets: Vec<f64>,
}

/// A scalar objective of the batch's `u` entries with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct UObjective {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GcodTerms {
    pub l_model: Var,
    pub l_u: UObjective,
    pub diagnostics: GcodDiagnostics,
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(&b) / (na * nb)
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Evaluates the GCOD terms for one batch and records `L_model` on `tape`.
pub fn gcod_terms(
    tape: &mut Tape,
    logits: Var,
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    u_batch: &[f64],
    state: &GcodState,
) -> Result<GcodTerms> {
    let z = tape.value(logits).clone();
    let (b, c) = z.dim();
    check_labels(labels, b, c)?;
    if u_batch.len() != b {
        return Err(CoreError::dim("gcod u_batch", b, u_batch.len()));
    }
    if embeddings.nrows() != b {
        return Err(CoreError::dim("gcod embeddings", b, embeddings.nrows()));
    }
    let cfg = &state.config;
    let a = state.train_acc;
    let bf = b as f64;

    let mut grad_z = Array2::zeros((b, c));
    let mut grad_u = vec![0.0; b];
    let mut diag = GcodDiagnostics {
        l1: 0.0,
        l2: 0.0,
        l3: 0.0,
        per_sample_l1: Vec::with_capacity(b),
        per_sample_l2: Vec::with_capacity(b),
        per_sample_l3: Vec::with_capacity(b),
        soft_targets: Vec::with_capacity(b),
    };

    for i in 0..b {
        let y = labels[i];
        let u = u_batch[i];
        let zi = z.row(i);

        let s = if cfg.soft_targets && state.class_present[y] {
            cosine(embeddings.row(i), state.class_stats.row(y)).max(0.0)
        } else {
            1.0
        };

        // L1 on shifted logits
        let mut shifted = zi.to_vec();
        shifted[y] += a * u;
        let l1 = -s * log_softmax_at(&shifted, y);
        let p = softmax_row(ArrayView1::from(&shifted));

        // L2 on the hard prediction
        let pred = argmax(zi);
        let hit = if pred == y { 1.0 } else { 0.0 };
        let off_target = if pred == y { 0.0 } else { 1.0 };
        let l2 = (off_target + (hit + u - 1.0).powi(2)) / c as f64;
        let dl2_du = 2.0 * (hit + u - 1.0) / c as f64;

        // L3: KL-style agreement between sigmoid(z_y) and 1/(1+u)
        let q = 1.0 / (1.0 + u);
        let log_sig = log_sigmoid(zi[y]);
        let l3 = (1.0 - a) * q * (q.ln() - log_sig);
        let dl3_dzy = -(1.0 - a) * q * (1.0 - sigmoid(zi[y]));
        let dl3_du = -(1.0 - a) * q * q * (q.ln() + 1.0 - log_sig);

        for k in 0..c {
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad_z[[i, k]] = cfg.l1_weight * s * (p[k] - onehot) / bf;
        }
        grad_z[[i, y]] += cfg.l3_weight * dl3_dzy / bf;
        grad_u[i] = (cfg.l2_weight * dl2_du + cfg.l3_weight * dl3_du) / bf;

        for (name, v) in [("L1", l1), ("L2", l2), ("L3", l3)] {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("GCOD term {name} for batch row {i}")));
            }
        }
        diag.per_sample_l1.push(l1);
        diag.per_sample_l2.push(l2);
        diag.per_sample_l3.push(l3);
        diag.soft_targets.push(s);
        diag.l1 += l1 / bf;
        diag.l2 += l2 / bf;
        diag.l3 += l3 / bf;
    }

    let model_value = cfg.l1_weight * diag.l1 + cfg.l3_weight * diag.l3;
    let u_value = cfg.l2_weight * diag.l2 + cfg.l3_weight * diag.l3;
    let l_model = tape.fused_scalar(logits, model_value, grad_z);
    Ok(GcodTerms {
        l_model,
        l_u: UObjective {
            value: u_value,
            grad: grad_u,
        },
        diagnostics: diag,
    })
}

/// Applies a gradient step on the listed `u` entries and clamps them to `[0, 1]`.
pub fn update_u(state: &mut GcodState, positions: &[usize], grad: &[f64]) {
    let lr = state.config.u_lr;
    for (&pos, &g) in positions.iter().zip(grad) {
        state.u[pos] -= lr * g;
    }
    for &pos in positions {
        state.u[pos] = state.u[pos].clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub model_loss: f64,
    pub u_loss: f64,
}

/// One alternating GCOD update: forward, Adam step on `L_model`, gradient
/// step on the batch's `u` entries, clamp.
///
/// `positions` index into `state.u` (training-split order), one per graph in `batch`.
pub fn gcod_step(
    model: &mut Model,
    adam: &mut AdamState,
    state: &mut GcodState,
    batch: &GraphBatch,
    labels: &[usize],
    positions: &[usize],
) -> Result<StepLosses> {
    if positions.len() != batch.len() {
        return Err(CoreError::dim("gcod_step positions", batch.len(), positions.len()));
    }
    if let Some(&p) = positions.iter().find(|&&p| p >= state.u.len()) {
        return Err(CoreError::dim("gcod_step position", state.u.len(), p));
    }
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let out = model.forward(&mut tape, &params, batch)?;
    let u_batch: Vec<f64> = positions.iter().map(|&p| state.u[p]).collect();
    let pooled = tape.value(out.pooled).clone();
    let terms = gcod_terms(&mut tape, out.logits, pooled.view(), labels, &u_batch, state)?;
    let grads = tape.backward(terms.l_model)?;
    model.zero_grad();
    model.accumulate_grads(&grads, &params);
    adam_step(adam, &mut model.parameters_mut())?;
    update_u(state, positions, &terms.l_u.grad);
    Ok(StepLosses {
        model_loss: tape.scalar(terms.l_model),
        u_loss: terms.l_u.value,
    })
}

/// Recomputes class centroids from `embeddings` (one row per training graph).
pub fn refresh_class_stats(state: &mut GcodState, embeddings: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    let (classes, dim) = state.class_stats.dim();
    if embeddings.ncols() != dim {
        state.class_stats = Array2::zeros((classes, embeddings.ncols()));
    }
    check_labels(labels, embeddings.nrows(), classes)?;
    let mut sums = Array2::<f64>::zeros((classes, embeddings.ncols()));
    let mut counts = vec![0usize; classes];
    for (row, &y) in embeddings.rows().into_iter().zip(labels) {
        let mut target = sums.row_mut(y);
        target += &row;
        counts[y] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut r = sums.row_mut(k);
            r /= n as f64;
        }
    }
    state.class_present = counts.iter().map(|&n| n > 0).collect();
    state.class_stats = sums;
    Ok(())
}
