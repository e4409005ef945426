//! Numerics for two-team multitime differential games.
//!
//! The evolution parameter is multi-dimensional: trajectories are state
//! fields over a parallelepiped swept by a first-order PDE system (an
//! m-flow), payoffs combine a multiple integral of the running cost with
//! a terminal cost at the far corner, and the two teams optimize through
//! nonanticipating strategies. This crate provides:
//!
//! - lattice geometry and diagonal-level sweep orders ([`lattice`]),
//! - an expression DSL for defining games ([`expr`], [`gamespec`]),
//! - m-flow integration and Bolza payoffs ([`flow`]),
//! - lower/upper value functions by backward dynamic programming
//!   ([`values`]),
//! - min-max Hamiltonians and max-min representation builders
//!   ([`hamiltonian`]),
//! - a monotone marching scheme for the divergence-type Hamilton-Jacobi
//!   PDEs solved by generating vector fields ([`pde`]).
//!
//! All min/max operations scan finite control sample sets, so scan
//! results are exact and reproducible. Inner loops are data-parallel via
//! rayon when the `parallel` feature (default) is enabled; disabling it
//! yields a dependency-light sequential build with identical results.

pub mod catalog;
pub mod error;
mod exec;
pub mod expr;
pub mod flow;
pub mod gamespec;
pub mod hamiltonian;
pub mod lattice;
pub mod pde;
pub mod values;

pub use error::{Error, Result};

/// Crate version, re-exported for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
