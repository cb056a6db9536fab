//! Enclosure-method toolkit for the weighted p-Laplace equation in the plane.
//!
//! [`wolff`] builds the exponentially growing p-harmonic test functions,
//! [`solver`] computes Dirichlet-to-Neumann pairings by energy minimization,
//! and [`indicator`] turns their differences into support-function estimates
//! and a convex-hull reconstruction.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod indicator;
pub mod mesh;
pub mod monotonicity;
pub mod solver;
pub mod wolff;

pub use error::{Error, Result};
