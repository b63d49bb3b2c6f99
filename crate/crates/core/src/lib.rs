//! Quantum dynamics under repeated measurement.
//!
//! * [`twolevel`]: a resonantly driven two-level system, whose frequent
//!   measurement freezes the transition (Zeno effect).
//! * [`kickedmap`]: the quantum kicked rotor in the momentum basis, which
//!   localizes dynamically when left alone.
//! * [`measurement`]: measurement modelled as phase randomization of the
//!   measured amplitudes, with an exact density-matrix counterpart.
//! * [`classical`]: the classical standard-map ensemble used as the
//!   diffusion baseline.
//! * [`diagnostics`]: moments, participation ratio, localization-length and
//!   break-time estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod diagnostics;
mod error;
pub mod kickedmap;
pub mod measurement;
pub mod numerics;
pub mod twolevel;

pub use error::{Error, Result};

/// Library version recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
