//! Simulation of two-level atoms flying through the void channels of a
//! photonic band-gap crystal and exchanging a single excitation through a
//! defect-mode microcavity field and resonant dipole-dipole interaction.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`] - crystal frame, straight-line trajectories, atom specs
//! * [`defect`] - defect-mode profile, atom-field coupling, pulse areas
//! * [`rddi`] - resonant dipole-dipole coupling between atom pairs
//! * [`dynamics`] - single-excitation equations of motion and their integration
//! * [`analysis`] - final-state observables (populations, entropy, fidelities)
//! * [`sweep`] - velocity sweeps and searches for Bell / W operating points
//! * [`config`] - run configuration, validation, and built-in figure recipes
//! * [`export`] - CSV time series, JSON reports, config sidecars
//! * [`cli`] - command-line driver

// Validation deliberately writes `!(x > 0.0)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod constants;
pub mod defect;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod geometry;
pub mod ode;
pub mod quad;
pub mod rddi;
pub mod sweep;
pub mod vec3;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use vec3::Vec3;
