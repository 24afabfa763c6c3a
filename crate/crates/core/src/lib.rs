//! Homogenization of the nonconvex Hamilton-Jacobi equation
//! `u_t + (|Du|^2 - 1)^2 - V(x/eps) = 0` with a stationary random potential.
//!
//! The crate computes maximal subsolutions of the convex sub-equations
//! `|Du|^2 = 1 + sigma sqrt(mu + V)`, their deterministic limit shapes, the
//! effective Hamiltonian assembled from those shapes, the discounted cell
//! problem, and the oscillatory and homogenized evolutions.

pub mod error;
pub mod field;
pub mod grid;
pub mod metric;
pub mod shape;
pub mod effham;
pub mod cell;
pub mod evolve;
pub mod export;
pub mod rng;

pub use error::{Error, Result};
