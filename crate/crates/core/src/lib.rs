//! Desk-scale laboratory for training a policy that decides *when* to generate
//! auxiliary visual evidence (depth / segmentation pseudo-images), *which*
//! modality to generate, and *what* to answer.
//!
//! The crate is organized as a stack of small, independently testable layers:
//!
//! - [`numerics`]: f64 vectors, a tanh MLP with hand-derived backprop, Adam,
//!   temperature softmax sampling, and a central-finite-difference oracle.
//! - [`codec`]: lossless-by-construction RGB pseudo-image codecs for depth
//!   maps (percentile normalization) and segmentation masks (golden-angle
//!   palette).
//! - [`flow`]: rectified-flow velocity-field training and a deterministic
//!   Euler/Heun ODE sampler that generates latents from task conditions.
//! - [`cognition`]: the synthetic multiple-choice environment, the factored
//!   gate/modality/answer policy, supervised demonstration training.
//! - [`reward`]: the composite reward `r_a + r_f + r_e` (answer correctness,
//!   segment-format validity, gain-aware exploration shaping).
//! - [`grpo`]: group-relative advantage normalization, the clipped surrogate
//!   objective, and the reinforcement-learning training loop.
//! - [`curation`]: two-round accuracy probing that estimates per-item visual
//!   gain and splits the surviving items into supervised and RL pools.
//! - [`config`] / [`io`]: run configuration with file/flag precedence, and
//!   the on-disk formats (16-bit PGM/PPM, JSONL, JSON checkpoints, CSV).
//!
//! Everything is seeded explicitly through counter-based generators
//! ([`rng`]); there is no global RNG state anywhere, so every pipeline stage
//! is bit-reproducible given `(config, seed)`.

pub mod codec;
pub mod cognition;
pub mod config;
pub mod curation;
pub mod error;
pub mod flow;
pub mod grpo;
pub mod io;
pub mod numerics;
pub mod reward;
pub mod rng;

pub use error::{CoreError, Result};
