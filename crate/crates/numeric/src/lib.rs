//! Minimal dense-network engine.
//!
//! Only what fixed multilayer perceptrons need: affine layers with a handful of
//! activations, row-wise softmax losses, Adam with a stepped learning rate,
//! reproducible random streams, and a finite-difference gradient checker.
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and `f64` for verification.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod params;
pub mod real;
pub mod rng;
pub mod schedule;

pub use activation::{sigmoid, softplus, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{dense_backward, dense_forward, Dense, DenseCache};
pub use error::{NumericError, Result};
pub use gradcheck::{
    analytic_gradient, central_differences, compare_gradients, grad_check, relative_error, GradCheckConfig,
    GradCheckReport,
};
pub use loss::{l2_normalize_backward, l2_normalize_rows, log_softmax_rows, logsumexp, softmax_cross_entropy, softmax_rows};
pub use matrix::Matrix;
pub use params::{HasParams, Param, ParamId, ParamStore};
pub use real::Real;
pub use rng::{RngPosition, RngStream};
pub use schedule::{lr_at_epoch, StepDecay};
