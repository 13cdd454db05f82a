//! Layers built on the tape: graph convolution, linear maps, MLPs, losses.

use std::sync::Arc;

use super::{DiffError, SparseMatrix, Tape, Tensor, Var};
use crate::rng::SeededRng;

/// Hidden-layer nonlinearity used by GCN and MLP blocks.
pub const HIDDEN_ACTIVATION: &str = "relu";

/// `act(Â · H · W + b)`; ReLU when `activate`, identity otherwise.
pub fn gcn_layer(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    w: Var,
    b: Var,
    activate: bool,
) -> Result<Var, DiffError> {
    let hw = tape.matmul(h, w)?;
    let propagated = tape.spmm(Arc::clone(adj), hw)?;
    let out = tape.add_row_bias(propagated, b)?;
    Ok(if activate { tape.relu(out) } else { out })
}

/// `x · w (+ bias)`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, bias: Option<Var>) -> Result<Var, DiffError> {
    let y = tape.matmul(x, w)?;
    match bias {
        Some(b) => tape.add_row_bias(y, b),
        None => Ok(y),
    }
}

/// Linear + ReLU on every layer except the last, which returns logits.
pub fn mlp(tape: &mut Tape, x: Var, layers: &[(Var, Var)]) -> Result<Var, DiffError> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        h = linear(tape, h, w, Some(b))?;
        if i + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

pub fn bce_with_pos_weight(
    tape: &mut Tape,
    logits: Var,
    targets: &Tensor,
    pos_weight: f64,
) -> Result<Var, DiffError> {
    if targets.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(DiffError::ShapeMismatch("bce targets must be 0 or 1".into()));
    }
    tape.bce_with_pos_weight(logits, targets, pos_weight)
}

/// Uniform Glorot initialisation on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init(rows: usize, cols: usize, seed: u64) -> Tensor {
    let bound = glorot_bound(rows, cols);
    let mut rng = SeededRng::new(seed);
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}
