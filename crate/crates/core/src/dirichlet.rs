//! Dirichlet energy of node representations.
//!
//! The spatial form `trace(Zᵀ Δ Z)` is evaluated edge by edge:
//! `Σ_{(i,j)∈E} ||z_i/√d_i − z_j/√d_j||²`, which equals the trace form for the
//! normalized Laplacian and is non-negative by construction. The spectral form
//! expands each channel in the Laplacian eigenbasis and serves as an oracle.

use ndarray::{Array2, ArrayView2};

use crate::error::{CoreError, Result};
use crate::graph::{block_diagonal, Graph};
use crate::spectral::EigenDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMethod {
    Spatial,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub per_graph_energy: Vec<f64>,
    pub dataset_energy: f64,
    pub method: EnergyMethod,
}

pub fn energy_spatial(z: ArrayView2<f64>, g: &Graph) -> Result<f64> {
    if z.nrows() != g.num_nodes() {
        return Err(CoreError::dim("energy_spatial rows", g.num_nodes(), z.nrows()));
    }
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut total = 0.0;
    for &(i, j) in g.edges() {
        let (zi, zj) = (z.row(i), z.row(j));
        let (si, sj) = (inv_sqrt[i], inv_sqrt[j]);
        total += zi
            .iter()
            .zip(zj.iter())
            .map(|(a, b)| {
                let d = a * si - b * sj;
                d * d
            })
            .sum::<f64>();
    }
    Ok(total)
}

/// `Σ_r Σ_u λ_u (ψ_uᵀ Z_r)²` for a precomputed Laplacian decomposition.
pub fn energy_spectral(z: ArrayView2<f64>, spec: &EigenDecomposition) -> Result<f64> {
    if z.nrows() != spec.dim() {
        return Err(CoreError::dim("energy_spectral rows", spec.dim(), z.nrows()));
    }
    let coeffs = spec.eigenvectors.t().dot(&z);
    Ok(coeffs
        .rows()
        .into_iter()
        .zip(spec.eigenvalues.iter())
        .map(|(row, &lambda)| lambda * row.iter().map(|c| c * c).sum::<f64>())
        .sum())
}

/// Dataset-average energy `(1/|D|) Σ_i E(Z_i)`.
pub fn dataset_energy(reps: &[(ArrayView2<f64>, &Graph)]) -> Result<EnergyReport> {
    if reps.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let per_graph_energy = reps
        .iter()
        .map(|(z, g)| energy_spatial(z.view(), g))
        .collect::<Result<Vec<_>>>()?;
    let dataset_energy = per_graph_energy.iter().sum::<f64>() / per_graph_energy.len() as f64;
    Ok(EnergyReport {
        per_graph_energy,
        dataset_energy,
        method: EnergyMethod::Spatial,
    })
}

/// Spectral-path counterpart of [`dataset_energy`], computing one
/// eigendecomposition per graph.
pub fn dataset_energy_spectral(reps: &[(ArrayView2<f64>, &Graph)]) -> Result<EnergyReport> {
    if reps.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let per_graph_energy = reps
        .iter()
        .map(|(z, g)| energy_spectral(z.view(), &crate::spectral::laplacian_spectrum(g)))
        .collect::<Result<Vec<_>>>()?;
    let dataset_energy = per_graph_energy.iter().sum::<f64>() / per_graph_energy.len() as f64;
    Ok(EnergyReport {
        per_graph_energy,
        dataset_energy,
        method: EnergyMethod::Spectral,
    })
}

/// Relative gap between the dataset-average energy and the energy of the
/// block-diagonal union divided by the number of graphs. Always ~0; kept as a
/// permanent self-test of the batching construction.
pub fn theorem1_residual(reps: &[(ArrayView2<f64>, &Graph)]) -> Result<f64> {
    let report = dataset_energy(reps)?;
    let graphs: Vec<Graph> = reps
        .iter()
        .map(|(z, g)| g.with_features(z.to_owned()))
        .collect::<Result<_>>()?;
    let refs: Vec<&Graph> = graphs.iter().collect();
    let block = block_diagonal(&refs)?;
    let union = block.as_graph()?;
    let big = energy_spatial(block.features.view(), &union)? / reps.len() as f64;
    Ok((report.dataset_energy - big).abs() / report.dataset_energy.max(1.0))
}

/// Dense trace form `trace(Zᵀ Δ Z)`; reference path for tests.
pub fn energy_trace(z: ArrayView2<f64>, laplacian: &Array2<f64>) -> f64 {
    let lz = laplacian.dot(&z);
    z.iter().zip(lz.iter()).map(|(a, b)| a * b).sum()
}
