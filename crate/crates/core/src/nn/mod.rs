//! Dense tensors with reverse-mode gradients, GNN layers, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradcheck_fn, gradcheck_model, GradcheckReport};
pub use model::{
    gcn_forward, gin_forward, readout, Activation, ForwardOutput, GnnLayer, GraphBatch, GraphOperators, LayerKind,
    Linear, Model, ModelConfig, Propagation, Tensor,
};
pub use tape::{BlockOperator, Gradients, PoolMode, Segments, Tape, Var};
