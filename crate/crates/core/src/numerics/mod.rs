//! Minimal f64 numerics: vectors, a tanh MLP with exact backprop, Adam,
//! temperature softmax sampling, and a finite-difference gradient oracle.
//!
//! All gradients in the crate flow through [`mlp_backward`], whose
//! correctness is pinned against [`finite_diff_gradient`] (central
//! differences) in the test suite and the acceptance gate.

mod adam;
mod finite_diff;
mod mlp;
mod softmax;
mod vector;

pub use adam::{adam_step, adam_step_mlp, AdamConfig, OptState};
pub use finite_diff::{central_difference, finite_diff_gradient, max_relative_error};
pub use mlp::{mlp_backward, mlp_forward, ForwardCache, Matrix, MlpGrads, MlpParams};
pub use softmax::{log_softmax, softmax_probs, softmax_sample, softmax_sample_seeded};
pub use vector::RealVector;
