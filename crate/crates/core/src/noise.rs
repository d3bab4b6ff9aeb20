//! Seeded synthetic label corruption.
//!
//! Each label is corrupted independently with probability `rate`:
//! - symmetric: replaced by a uniformly random *different* class;
//! - pairflip: replaced by `(c + 1) mod C`.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::graph::GraphDataset;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetric,
    Pairflip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Self {
        Self { kind, rate, seed }
    }

    pub fn clean() -> Self {
        Self::new(NoiseKind::Symmetric, 0.0, 0)
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(CoreError::InvalidNoise(format!("rate {} outside [0, 1]", self.rate)));
        }
        if num_classes < 2 && self.rate > 0.0 {
            return Err(CoreError::InvalidNoise(format!(
                "label noise needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(())
    }
}

/// Returns `(assigned_labels, noise_mask)`.
pub fn inject(labels: &[usize], num_classes: usize, spec: &NoiseSpec) -> Result<(Vec<usize>, Vec<bool>)> {
    spec.validate(num_classes)?;
    if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(CoreError::LabelOutOfRange {
            label,
            classes: num_classes,
        });
    }
    let mut rng = CounterRng::new(spec.seed).fork(0x4e01_5e);
    let assigned: Vec<usize> = labels
        .iter()
        .map(|&c| {
            if spec.rate == 0.0 || !rng.bernoulli(spec.rate) {
                return c;
            }
            match spec.kind {
                NoiseKind::Pairflip => (c + 1) % num_classes,
                NoiseKind::Symmetric => {
                    let r = rng.below(num_classes - 1);
                    if r >= c {
                        r + 1
                    } else {
                        r
                    }
                }
            }
        })
        .collect();
    let mask = assigned.iter().zip(labels).map(|(a, t)| a != t).collect();
    Ok((assigned, mask))
}

/// Corrupts the training split of `dataset` in place; test labels stay true.
/// Returns the realized noise rate over the training split.
pub fn inject_dataset(dataset: &mut GraphDataset, spec: &NoiseSpec) -> Result<f64> {
    let train_true: Vec<usize> = dataset.train.iter().map(|&i| dataset.true_labels[i]).collect();
    let (noisy, mask) = inject(&train_true, dataset.num_classes, spec)?;
    let mut assigned = dataset.true_labels.clone();
    for (&i, &l) in dataset.train.iter().zip(&noisy) {
        assigned[i] = l;
    }
    dataset.set_assigned_labels(assigned)?;
    let flipped = mask.iter().filter(|&&m| m).count();
    Ok(if mask.is_empty() { 0.0 } else { flipped as f64 / mask.len() as f64 })
}

/// Row-stochastic estimate of `P(assigned = j | true = i)`; empty rows become identity rows.
pub fn confusion_estimate(true_labels: &[usize], assigned: &[usize], num_classes: usize) -> Array2<f64> {
    let mut counts = Array2::<f64>::zeros((num_classes, num_classes));
    for (&t, &a) in true_labels.iter().zip(assigned) {
        counts[[t, a]] += 1.0;
    }
    for (i, mut row) in counts.rows_mut().into_iter().enumerate() {
        let total: f64 = row.sum();
        if total == 0.0 {
            row[i] = 1.0;
        } else {
            row /= total;
        }
    }
    counts
}
