//! Peer-effect estimation on networks observed with measurement error.
//!
//! The crate is `no_std` (with `alloc`). It covers the full estimation path:
//! blockmodel latent structure and network draws ([`netgen`]), outcome
//! generation under peer and latent contagion ([`contagion`]), network
//! corruption ([`corrupt`]) and principal-subspace recovery ([`recover`]), and the
//! two-stage least squares estimators ([`estimators`]). Dense kernels live in
//! [`linalg`]. Enable the `parallel` feature to spread Monte Carlo draws over
//! a rayon pool.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod contagion;
pub mod corrupt;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod netgen;
pub mod recover;
pub mod rng;

pub use error::{Error, Result};
pub use nalgebra;
