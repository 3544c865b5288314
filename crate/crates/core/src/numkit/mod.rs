//! Dense numeric kernel: matrices, activations, loss, the SGD update and
//! keyed random streams.

mod matrix;
mod ops;
mod rng;

pub use matrix::Matrix;
pub use ops::{
    apportion, argmax, frobenius_sq, gelu, gelu_grad, gelu_grad_scalar, gelu_scalar, sgd_step,
    softmax_cross_entropy,
};
pub use rng::{fnv1a64, fnv1a64_extend, SeededRng, FNV1A64_OFFSET};
