//! Simulation of neural-network training on analog resistive crossbar arrays.
//!
//! The crate models crosspoint devices whose conductance steps depend on the
//! distance from a device-specific symmetry point, the tile-level analog
//! primitives built from them (noisy matrix-vector products and the
//! pulse-coincidence rank-one update), and two training schemes on top:
//!
//! * conventional SGD on a main/reference array pair, and
//! * the coupled auxiliary/core array scheme (stochastic Hamiltonian descent,
//!   "SHD"), in which the auxiliary array `A` accumulates gradients and the core
//!   array `C` is nudged toward `A` by periodic one-hot transfer reads.
//!
//! Continuum-limit ODE references live in [`dynamics`], single-parameter
//! regression experiments in [`scalar`], and small character-level networks in
//! [`networks`]. Training backends are registered by name in
//! [`trainers::BackendRegistry`] and selected at runtime.

pub mod cli_io;
pub mod crossbar;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod matrix;
pub mod networks;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod trainers;

pub use error::{Error, Result};
pub use rng::SimRng;
