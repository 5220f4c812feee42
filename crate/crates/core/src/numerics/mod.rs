//! Dense tensors, matrix products, activations and the finite-difference oracle.

pub mod gradcheck;
pub mod ops;
pub mod serialize;
mod tensor;

pub use gradcheck::{finite_diff_gradient, relative_error, DEFAULT_STEP, GRADIENT_TOLERANCE};
pub use ops::{concat_channels, hadamard, matmul, sigmoid, sigmoid_scalar, split_channels, tanh};
pub use tensor::Tensor;
