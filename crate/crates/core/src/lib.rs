//! Spectral simulation and stability analysis for finite crystals in the
//! Schrödinger–Poisson–Newton model on the periodic torus `T_N = R³/NZ³`.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: dual lattice, Brillouin representatives and Galerkin mode sets.
//! - [`density`]: ion charge densities and the Jellium / Wiener audits.
//! - [`field`]: Green operator, charge density, energy, charge and the phase-space metric.
//! - [`dynamics`]: the nonlinearity, split-step and Duhamel/Picard integrators.
//! - [`groundstate`]: ground states, ion arrangements and structure factors.
//! - [`hessian`]: the energy Hessian at a ground state and its spectrum.
//! - [`stability`]: distance to the solitary manifold and orbital stability experiments.
//! - [`io`]: on-disk formats for densities, states and arrangements.

pub mod density;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod groundstate;
pub mod hessian;
pub mod io;
pub mod lattice;
pub mod stability;

mod grid;

pub use error::{Error, Result};

/// Elementary vector type for positions, momenta and dual vectors.
pub type Vec3 = [f64; 3];

/// Library version recorded in provenance files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
