//! Positive-eigenvalue projection of GNN weight matrices.
//!
//! A weight `W` is symmetrized to `S = (W + Wᵀ)/2`, decomposed as
//! `S = Φ diag(μ) Φᵀ`, and replaced by `Φ diag(max(μ, 0)) Φᵀ`. This is the
//! Frobenius-nearest symmetric PSD matrix to `S`. Projection runs after the
//! optimizer step and never touches gradient buffers.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::nn::Model;
use crate::spectral::{sym_eig, sym_eig_warm, EigenDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionTarget {
    None,
    W2Only,
    W1AndW2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    All,
    Indices(Vec<usize>),
}

impl LayerSelection {
    fn contains(&self, layer: usize) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::Indices(v) => v.contains(&layer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionPolicy {
    pub target: ProjectionTarget,
    pub layers: LayerSelection,
    /// Project every `frequency` optimizer steps.
    pub frequency: usize,
}

impl ProjectionPolicy {
    pub fn none() -> Self {
        Self {
            target: ProjectionTarget::None,
            layers: LayerSelection::All,
            frequency: 1,
        }
    }

    pub fn w2_only() -> Self {
        Self {
            target: ProjectionTarget::W2Only,
            ..Self::none()
        }
    }

    pub fn w1_and_w2() -> Self {
        Self {
            target: ProjectionTarget::W1AndW2,
            ..Self::none()
        }
    }

    pub fn is_active(&self) -> bool {
        self.target != ProjectionTarget::None
    }

    /// `(layer, is_w2)` pairs selected for a model with `layers` GNN layers.
    pub fn targets(&self, layers: usize) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        for l in (0..layers).filter(|&l| self.layers.contains(l)) {
            match self.target {
                ProjectionTarget::None => {}
                ProjectionTarget::W2Only => out.push((l, true)),
                ProjectionTarget::W1AndW2 => {
                    out.push((l, false));
                    out.push((l, true));
                }
            }
        }
        out
    }
}

fn symmetrize(w: &Array2<f64>) -> Array2<f64> {
    (w + &w.t()) * 0.5
}

fn clip_reconstruct(e: &EigenDecomposition) -> Array2<f64> {
    symmetrize(&e.reconstruct_with(|mu| mu.max(0.0)))
}

fn check_square(w: &Array2<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(CoreError::dim("project_positive", "square matrix", format!("{}x{}", w.nrows(), w.ncols())));
    }
    Ok(())
}

/// Symmetric PSD projection of a square matrix.
pub fn project_positive(w: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(w)?;
    Ok(clip_reconstruct(&sym_eig(&symmetrize(w))?))
}

/// Replaces every targeted matrix by its projection, cold-starting each
/// eigendecomposition.
pub fn apply_policy(model: &mut Model, policy: &ProjectionPolicy) -> Result<()> {
    for (l, is_w2) in policy.targets(model.layers.len()) {
        let layer = &mut model.layers[l];
        let t = if is_w2 { &mut layer.w2 } else { &mut layer.w1 };
        t.values = project_positive(&t.values)?;
    }
    Ok(())
}

/// Stateful projector used during training. Keeps the last eigenbasis of
/// every targeted matrix and warm-starts from it; a cold decomposition is
/// forced every `COLD_EVERY` projections to stop rounding drift in the basis.
#[derive(Debug, Clone)]
pub struct Projector {
    pub policy: ProjectionPolicy,
    bases: Vec<Option<Array2<f64>>>,
    uses: Vec<u64>,
    steps: u64,
}

const COLD_EVERY: u64 = 64;

impl Projector {
    pub fn new(policy: ProjectionPolicy) -> Self {
        Self {
            policy,
            bases: Vec::new(),
            uses: Vec::new(),
            steps: 0,
        }
    }

    fn slot(layer: usize, is_w2: bool) -> usize {
        2 * layer + usize::from(is_w2)
    }

    fn decompose(&mut self, slot: usize, s: &Array2<f64>) -> Result<EigenDecomposition> {
        if self.bases.len() <= slot {
            self.bases.resize(slot + 1, None);
            self.uses.resize(slot + 1, 0);
        }
        self.uses[slot] += 1;
        let e = match &self.bases[slot] {
            Some(q) if self.uses[slot] % COLD_EVERY != 0 && q.nrows() == s.nrows() => sym_eig_warm(s, q)?,
            _ => sym_eig(s)?,
        };
        self.bases[slot] = Some(e.eigenvectors.clone());
        Ok(e)
    }

    /// Call once after every optimizer step. Returns whether a projection ran.
    pub fn after_step(&mut self, model: &mut Model) -> Result<bool> {
        if !self.policy.is_active() {
            return Ok(false);
        }
        self.steps += 1;
        if self.steps % self.policy.frequency.max(1) as u64 != 0 {
            return Ok(false);
        }
        for (l, is_w2) in self.policy.targets(model.layers.len()) {
            let slot = Self::slot(l, is_w2);
            let layer = &model.layers[l];
            let w = if is_w2 { &layer.w2.values } else { &layer.w1.values };
            check_square(w)?;
            let e = self.decompose(slot, &symmetrize(w))?;
            let projected = clip_reconstruct(&e);
            let layer = &mut model.layers[l];
            let t = if is_w2 { &mut layer.w2 } else { &mut layer.w1 };
            t.values = projected;
        }
        Ok(true)
    }

    /// Smallest eigenvalue over all targeted matrices (symmetrized).
    pub fn min_eigenvalue(&self, model: &Model) -> Result<f64> {
        let mut min = f64::INFINITY;
        for (l, is_w2) in self.policy.targets(model.layers.len()) {
            let layer = &model.layers[l];
            let w = symmetrize(if is_w2 { &layer.w2.values } else { &layer.w1.values });
            let slot = Self::slot(l, is_w2);
            let e = match self.bases.get(slot).and_then(|b| b.as_ref()) {
                Some(q) => sym_eig_warm(&w, q)?,
                None => sym_eig(&w)?,
            };
            min = min.min(e.eigenvalues[0]);
        }
        Ok(min)
    }
}
