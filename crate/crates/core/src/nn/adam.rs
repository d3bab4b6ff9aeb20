//! Adam with decoupled weight decay.
//!
//! ```text
//! m ← β1 m + (1-β1) g          v ← β2 v + (1-β2) g²
//! p ← p - lr·wd·p - lr · (m / (1-β1ᵗ)) / (sqrt(v / (1-β2ᵗ)) + ε)
//! ```
//! Gradients are read, never cleared; the caller zeroes them.

use ndarray::{Array2, Zip};

use super::model::Tensor;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`; lr 0.001, weight decay 1e-4.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Array2<f64>> = params
            .into_iter()
            .map(|p| Array2::zeros(p.values.raw_dim()))
            .collect();
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn with_lr(mut self, lr: f64, weight_decay: f64) -> Self {
        self.lr = lr;
        self.weight_decay = weight_decay;
        self
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [&mut Tensor]) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(CoreError::dim("adam_step parameter count", state.first.len(), params.len()));
    }
    for (p, m) in params.iter().zip(&state.first) {
        if p.values.raw_dim() != m.raw_dim() {
            return Err(CoreError::dim(
                "adam_step parameter shape",
                format!("{:?}", m.dim()),
                format!("{:?}", p.values.dim()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, wd, eps) = (state.beta1, state.beta2, state.lr, state.weight_decay, state.eps);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        if !p.requires_grad {
            continue;
        }
        let Tensor { values, grad, .. } = &mut **p;
        Zip::from(values).and(&*grad).and(m).and(v).for_each(|w, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * wd * *w + lr * m_hat / (v_hat.sqrt() + eps);
        });
        if p.values.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite(format!("parameters after Adam step {}", state.step)));
        }
    }
    Ok(())
}
