//! Discrete spectral geometry for Schrödinger operators `-Δ + V` on closed
//! manifolds with excised vertex sets.
//!
//! The crate builds periodic ring and flat-torus discretizations, solves the
//! lowest eigenpairs on the whole manifold and on `M − A` (Dirichlet
//! excision), computes the Schrödinger capacity `cap(A)` as an
//! equality-constrained quadratic minimization, and checks the eigenvalue
//! perturbation bound `0 ≤ λ_k(M−A) − λ_k(M) ≤ C_k √cap(A)` over sweeps of
//! hole sizes.

pub mod capacity;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod operator;
pub mod sparse;

pub use error::{Error, Result};
