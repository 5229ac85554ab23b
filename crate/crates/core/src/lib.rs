//! Numerical laboratory for the Katok map.
//!
//! The crate builds the slowed automorphism `G` of the torus and its smooth conjugate
//! `G~`, then measures what thermodynamic formalism says about them: the derivative
//! cocycle and its cones, the good/bad orbit decomposition, topological pressure of
//! the geometric family, Gibbs and large-deviation diagnostics, and the Lyapunov
//! spectrum obtained by Legendre transform.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decomposition;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod katok;
pub mod parallel;
pub mod params;
pub mod pressure;
pub mod spectrum;
pub mod stats;
pub mod tangent;

pub use error::{KatokError, Result};
pub use geometry::{
    bowen_dist, from_eigen, to_eigen, torus_dist, BowenSpec, Dynamics, EigenVec2, LinearCat, TorusPoint,
};
pub use katok::{KatokMap, KatokTilde, OrbitCursor};
pub use params::{beta_of_alpha, MapParams, Preset};
