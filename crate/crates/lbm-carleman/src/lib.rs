//! Classical reference implementation of a Carleman-linearised lattice
//! Boltzmann pipeline: the shifted incompressible LBE, its truncated
//! Carleman embedding, the block time-stepping linear systems built from it,
//! condition-number estimation, truncation-error studies and a quantum
//! resource cost model.

pub mod carleman;
pub mod cost;
pub mod error_analysis;
pub mod harness;
pub mod lanczos;
pub mod linear_system;
pub mod observables;
pub mod error;
pub mod lattice;
pub mod simulation;
pub mod sparse;

pub use error::{Error, Result};
