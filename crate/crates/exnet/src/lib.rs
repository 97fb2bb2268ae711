//! Experts networks: joint prediction and entity clustering.
//!
//! An experts network routes each entity (e.g. an investor) through a gating
//! block — a softmax over the inner products of a trainable entity embedding
//! with per-expert embeddings — and combines the outputs of `n` independent
//! expert sub-networks with those attribution probabilities. Two regularizers
//! shape the routing: an entropy term that pushes each entity towards a
//! single expert, and a specialization term that penalizes correlated
//! experts. The gating block doubles a posteriori as a clustering of the
//! entities.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod losses;
pub mod math;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};

/// Scalar type the training stack runs on.
pub type F = f64;
/// Row-major `f64` matrix, the workhorse type of the crate.
pub type Mat = math::Matrix<f64>;
/// Single-precision matrix alias for callers that want it.
pub type Mat32 = math::Matrix<f32>;
