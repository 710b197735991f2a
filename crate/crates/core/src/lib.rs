//! Continuous-time quantum walks on dynamically percolated graphs.
//!
//! Each time step of length `tau` keeps every edge independently with
//! probability `lambda` and evolves the walker with the exact propagator of
//! the surviving subgraph. Three backends are provided: single stochastic
//! trajectories, the exact enumerated step channel acting on density
//! matrices, and Monte Carlo averages over trajectories. For small `tau` all
//! of them approach the unpercolated walk run at rescaled time `lambda * t`,
//! which the [`oracles`] module provides in closed form.

pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod oracles;
pub mod rng;
pub mod spectral;
pub mod walk;

pub use error::{Result, WalkError};
