//! Simulation and analysis of ground-to-satellite teleportation of
//! polarization qubits.
//!
//! The crate is organized along the physical chain:
//!
//! * [`qstate`]: dense states, operators, Jones matrices and fidelity.
//! * [`photonsrc`]: heralded input preparation and the entangled resource.
//! * [`bsm`]: polarizing-beam-splitter Bell-state measurement and feed-forward.
//! * [`linkgeom`]: pass geometry and uplink loss.
//! * [`timesync`]: two-clock time tagging, clock recovery and coincidences.
//! * [`experiment`]: campaign Monte Carlo, analytic pipeline, error budget
//!   and calibration.
//! * [`cli`]: the `teleport-sim` command-line front end.

// Validation uses `!(x > 0.0)` so that NaN is rejected along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsm;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod linkgeom;
pub mod photonsrc;
pub mod qstate;
pub mod timesync;

pub use error::{Error, Result};
