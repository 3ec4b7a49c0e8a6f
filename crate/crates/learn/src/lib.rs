//! Learning-based solvers for the swarm density game and the harness that
//! compares them against open-loop boundary-value solutions.
//!
//! - [`pinn`]: curriculum training of a two-output value network on the
//!   HJI residual.
//! - [`dqn`]: Nash deep Q-learning baseline for the 2-region game.
//! - [`rollout`]: closed-loop simulation and PINN/BVP comparison.
//! - [`presets`]: named desk- and paper-scale configurations.

pub mod coords;
pub mod dqn;
pub mod error;
pub mod pinn;
pub mod presets;
pub mod rollout;
pub mod sampling;

pub use coords::Coords;
pub use error::{LearnError, Result};
