//! Central finite-difference checks of tape gradients.
//!
//! Relative error per entry is `|a - n| / max(|a|, |n|, 1e-6)`. ReLU kinks
//! can make a single difference quotient wrong, so an entry that fails at
//! `h` is retried at `h/10` and `h/100` and the smallest error is kept.

use ndarray::Array2;

use super::model::Model;
use super::tape::{Tape, Var};
use crate::error::{CoreError, Result};

const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn refine(analytic: f64, h: f64, tol: f64, f: &mut dyn FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut step = h;
    for _ in 0..3 {
        let numeric = (f(step)? - f(-step)?) / (2.0 * step);
        best = best.min(rel_error(analytic, numeric));
        if best < tol {
            break;
        }
        step /= 10.0;
    }
    Ok(best)
}

/// Checks every trainable parameter of `model` against the scalar built by `loss_fn`.
/// `loss_fn` must work on inference tapes too.
pub fn gradcheck_model<F>(model: &Model, loss_fn: F, h: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&Model, &mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let loss = loss_fn(model, &mut tape, &params)?;
    let grads = tape.backward(loss)?;

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        worst: None,
    };
    let named = model.named_parameters();
    for (pi, (name, tensor)) in named.iter().enumerate() {
        if !tensor.requires_grad {
            continue;
        }
        let analytic = grads
            .get(params[pi])
            .cloned()
            .unwrap_or_else(|| Array2::zeros(tensor.values.raw_dim()));
        let flat_analytic: Vec<f64> = analytic.iter().copied().collect();
        for (flat, &a) in flat_analytic.iter().enumerate() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut perturbed = model.clone();
                let p = &mut perturbed.parameters_mut()[pi];
                let slot = p.values.iter_mut().nth(flat).expect("index in range");
                *slot += delta;
                let mut t = Tape::inference();
                let vars = perturbed.bind(&mut t);
                let l = loss_fn(&perturbed, &mut t, &vars)?;
                Ok(t.scalar(l))
            };
            let err = refine(a, h, tol, &mut eval)?;
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), flat));
            }
        }
    }
    if !report.max_rel_error.is_finite() {
        return Err(CoreError::NonFinite("gradcheck".into()));
    }
    Ok(report)
}

/// Checks `analytic` against central differences of `f` around `x`.
pub fn gradcheck_fn<F>(x: &Array2<f64>, analytic: &Array2<f64>, f: F, h: f64, tol: f64) -> Result<f64>
where
    F: Fn(&Array2<f64>) -> Result<f64>,
{
    if x.raw_dim() != analytic.raw_dim() {
        return Err(CoreError::dim("gradcheck_fn", format!("{:?}", x.dim()), format!("{:?}", analytic.dim())));
    }
    let mut worst = 0.0f64;
    for (flat, &a) in analytic.iter().enumerate() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut xp = x.clone();
            *xp.iter_mut().nth(flat).expect("index in range") += delta;
            f(&xp)
        };
        worst = worst.max(refine(a, h, tol, &mut eval)?);
    }
    Ok(worst)
}
