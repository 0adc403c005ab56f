//! Simulation core for an artificial atom ultrastrongly coupled to a cavity
//! mode: dressed spectra, decoherence sensitivities, secular master-equation
//! dynamics, dynamical-decoupling filter integrals and a polarized-state
//! quantum-memory protocol.
//!
//! Frequencies and times use the cavity frequency as unit (`hbar = 1`),
//! except in [`dd_filter`], which works in SI seconds and kelvin.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod dd_filter;
pub mod error;
pub mod hilbert;
pub mod io;
pub mod lindblad;
pub mod memory_protocol;
pub mod rabi_model;
pub mod sensitivity;

pub use error::{Error, Result};
