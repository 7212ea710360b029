//! Diffuse-interface approximations of motion by surface diffusion.
//!
//! The crate integrates the variational and non-variational doubly degenerate
//! Cahn-Hilliard models (and the singly degenerate baseline) on a periodic
//! two-dimensional grid, evolves the matching sharp-interface curve, and
//! measures how closely the diffuse models track it.

pub mod analysis;
pub mod asymptotics;
pub mod config;
pub mod curve;
pub mod driver;
pub mod error;
pub mod grid;
pub mod model;
pub mod output;
pub mod shape;
pub mod sharp;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
