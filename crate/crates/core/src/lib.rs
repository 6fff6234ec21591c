//! Spectral solver and estimate-verification harness for evolution
//! equations `du/dt = psi(t, -i grad) u` on periodic grids.
//!
//! The crate is organised bottom-up: [`spectral`] holds grids, fields and
//! transforms; [`symbols`], [`weights`] and [`measures`] describe the
//! ingredients of an estimate; [`littlewood_paley`] builds the dyadic
//! frame and the weighted function-space norms; [`kernels`] evolves data
//! and measures kernel decay; [`verify`] assembles scenarios and reports.

pub mod cli;
pub mod config;
pub mod error;
pub mod kernels;
pub mod littlewood_paley;
pub mod measures;
pub mod numerics;
pub mod spectral;
pub mod symbols;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use spectral::{SpectralField, SpectralGrid};
