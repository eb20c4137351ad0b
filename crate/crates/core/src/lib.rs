//! Simulation and design toolkit for fiber-coupled, cavity-enhanced
//! superconducting nanowire single-photon detectors.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamtrain;
pub mod cli;
pub mod designopt;
pub mod detector;
pub mod error;
pub mod materials;
pub mod recipes;
pub mod sweep;
pub mod system;
pub mod thinfilm;

pub use error::{Error, Result};
