//! Simulation of an electret-biased, in-plane overlap-varying electrostatic
//! vibration energy harvester.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: capacitance laws, stoppers, transducer force, port voltages,
//!   operating point and the small-signal model.
//! * [`dynamics`]: the coupled equations of motion and an adaptive
//!   Dormand–Prince integrator that locates stopper/clamp crossings.
//! * [`excitation`]: sinusoidal, seeded broadband and file-backed base
//!   accelerations.
//! * [`analysis`]: average power, mean-square displacement, Welch PSD and an
//!   energy-balance audit.
//! * [`config`] and [`sweep`]: run configuration files and parallel,
//!   deterministic parameter sweeps.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod excitation;
pub mod model;
pub mod sweep;

pub use error::{Error, Result};
