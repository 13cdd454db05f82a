//! Minimal tensor core with reverse-mode autodiff, GCN/MLP layers, weighted
//! BCE and Adam. Everything is `f64` and single-threaded.

mod io;
mod nn;
mod optim;
mod sparse;
mod tape;
mod tensor;

pub use io::{
    load_weights_into, save_weights, WeightEntry, WeightIoError, WeightManifest,
    WEIGHTS_FORMAT_VERSION,
};
pub use nn::{bce_with_pos_weight, gcn_layer, glorot_bound, glorot_init, linear, mlp, HIDDEN_ACTIVATION};
pub use optim::{AdamConfig, ParamId, ParameterStore};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("parameter {0} has no gradient")]
    MissingGradient(String),
}
