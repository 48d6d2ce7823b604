//! Dense numeric kernel: matrices, affine+ReLU blocks, the logistic
//! function, Adam, finite-difference checking and tensor persistence.
//!
//! All reductions run sequentially in index order so that results are
//! bit-reproducible.

pub mod adam;
pub mod container;
pub mod gradcheck;
pub mod matrix;
pub mod ops;

pub use adam::{AdamConfig, AdamState};
pub use container::TensorContainer;
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, relative_error};
pub use matrix::{axpy, dot, DenseMatrix};
pub use ops::{affine_relu_backward, affine_relu_forward, bce_with_logit, log_sigmoid, relu, sigmoid, AffineReluCache};
