//! Influence-guided distillation from a graph-convolutional teacher into a
//! plain MLP student: graph storage and normalization, the structural
//! influence score, one-time multi-hop feature pre-computation,
//! influence-weighted losses with hand-written gradients, and the
//! experiment harness around them.

pub mod data;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod hashing;
pub mod influence;
pub mod losses;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod propagation;
pub mod split;

pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
