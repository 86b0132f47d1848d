//! Minimal dense-tensor engine for the patch-classifier network: valid 3x3
//! convolution, stride-1 3x3 max pooling, ReLU/sigmoid, residual addition,
//! BCE and focal losses, Adam, and a finite-difference gradient checker.
//!
//! Every op has a hand-written backward pass; `gradcheck` verifies them
//! against central differences. Production code runs in `f32`; gradient
//! checking instantiates the same generic ops in `f64`.

mod gradcheck;
mod loss;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, Parameterized};
pub use loss::{loss_bce, loss_bce_backward, loss_focal, loss_focal_backward};
pub use ops::{
    conv2d, conv2d_backward, max_pool2d, max_pool2d_backward, relu, relu_backward, residual_add,
    residual_add_backward, sigmoid, sigmoid_backward, ConvGrads, ConvLayer,
};
pub use optim::{adam_step, OptimizerState};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: [usize; 4], got: [usize; 4] },
    #[error("input spatial dims {h}x{w} too small for a {need}x{need} window")]
    SpatialTooSmall { h: usize, w: usize, need: usize },
    #[error("channel mismatch: {a} vs {b}")]
    ChannelMismatch { a: usize, b: usize },
    #[error("residual skip dims {skip_h}x{skip_w} incompatible with {h}x{w} (must be >= and equal parity)")]
    SkipDims { skip_h: usize, skip_w: usize, h: usize, w: usize },
    #[error("non-finite loss (diverged)")]
    NonFiniteLoss,
}
