//! Core numerics for two-player differential games between swarm densities
//! on directed graphs.
//!
//! Each sub-swarm is a probability vector over the regions of a
//! [`RegionGraph`]; mass moves along edges at controlled transition rates
//! (the Kolmogorov forward / mean-field model). The terminal payoff of each
//! player is a Boltzmann soft-max of the element-wise density difference.
//!
//! This crate holds the pieces that do not involve learning:
//!
//! - [`graph`]: region graphs and the per-edge control matrices.
//! - [`dynamics`]: drift, RK4 stepping and open-loop rollouts.
//! - [`payoff`]: Boltzmann operator, its gradient and Hessian, terminal payoffs.
//! - [`pmp`]: equilibrial Hamiltonians, bang-bang controls, costate dynamics.
//! - [`bvp`]: collocation solver for the open-loop Nash two-point BVP.
//! - [`bimatrix`]: support enumeration for finite two-player stage games.

pub mod banded;
pub mod bimatrix;
pub mod bvp;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod payoff;
pub mod pmp;

pub use error::{Error, Result};
pub use graph::{ControlMatrix, Edge, RegionGraph};
