//! Graph classification under label noise.
//!
//! - [`graph`]: graphs, datasets, normalized Laplacians, block-diagonal batching
//! - [`spectral`]: Jacobi eigensolver and Laplacian spectra
//! - [`dirichlet`]: Dirichlet energy (spatial and spectral forms, dataset average)
//! - [`nn`]: autodiff tape, GCN/GIN layers, Adam, checkpoints
//! - [`noise`]: symmetric and pairflip label noise
//! - [`projection`]: positive-eigenvalue projection of layer weights
//! - [`losses`]: cross-entropy and the GCOD loss

pub mod dirichlet;
pub mod error;
pub mod graph;
pub mod losses;
pub mod nn;
pub mod noise;
pub mod projection;
pub mod rng;
pub mod spectral;

pub use error::{CoreError, Result};
pub use graph::{block_diagonal, degree_onehot_features, normalized_laplacian, BlockGraph, Graph, GraphDataset};
