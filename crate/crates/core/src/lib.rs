//! Numerical realization of the Kesten–Goldie tail theory for the random
//! difference equation `R_n = M_n R_{n-1} + Q_n` with invertible matrices.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: laws of the pair `(M, Q)`, sampling, assumption audits and
//!   stopped (geometrically sampled) pairs.
//! - [`geometry`]: the unit sphere, grids on it, grid functions and
//!   overflow-free accumulation of `log |x Π_n|`.
//! - [`operator`]: the transfer operator `T_ϰ`, its spectral radius and the
//!   tail index `κ` solving `ρ(κ) = 1`.
//! - [`shifted_chain`]: the κ-shifted direction chain, its stationary law `π`
//!   and drift `α`, and the tail of `sup_n |x Π_n|`.
//! - [`regeneration`]: split-chain construction from explicit minorization data.
//! - [`tail`]: samples of the stationary solution, survival curves, Hill
//!   estimates and the tail constant `K(x) = K₀ r(x)`.

// `!(a < b)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod regeneration;
pub mod rng;
pub mod shifted_chain;
pub mod stats;
pub mod tail;

pub use error::{Error, Result};
