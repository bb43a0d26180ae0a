//! Simulation and realised-covariation limit theory for multivariate
//! Brownian semistationary (BSS) processes driven by gamma kernels.
//!
//! The crate is `no_std` (with `alloc`). Enable `parallel` to spread
//! covariance tables and Monte Carlo paths over a rayon pool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod asymptotics;
pub mod covariation;
pub mod error;
pub mod family;
pub mod indexing;
pub mod kernel;
pub mod quad;
pub mod scaling;
pub mod simulate;
pub mod special;
mod util;

pub use error::{Error, Result};
pub use kernel::{GammaKernel, KernelSpec};
