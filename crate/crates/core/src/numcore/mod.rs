//! Dense matrix primitives, activations, initialisation and the
//! finite-difference gradient oracle.

mod matrix;
mod ops;
mod rng;

pub use matrix::{argmax, dot, Matrix};
pub use ops::{
    finite_diff_grad, gelu, gelu_grad_scalar, gelu_scalar, layer_norm, layer_norm_backward, layer_norm_cached,
    log_sum_exp, softmax_in_place, softmax_rows, xavier_bound, xavier_init, LayerNormCache,
};
pub use rng::SeededRng;

/// Layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;
/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
