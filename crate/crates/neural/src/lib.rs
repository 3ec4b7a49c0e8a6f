//! Small tanh multilayer perceptrons with exact input derivatives and
//! parameter gradients of losses built from those derivatives.
//!
//! Parameters live in one flat vector (per layer: weights row-major as
//! `out x in`, then biases) so optimizers and checkpoints treat them as a
//! single slice.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod mlp;

pub use adam::Adam;
pub use error::{NeuralError, Result};
pub use mlp::{LossSeeds, Mlp, ValueNet};
