//! Coupled eddy-current, heat and phase-transition solver for induction
//! hardening, with runtime thermodynamic certificates.

pub mod batch;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod diagnostics;
pub mod em_solver;
pub mod io;
pub mod materials;
pub mod mms;
pub mod phase_solver;
pub mod heat_solver;
pub mod stepper;

pub use error::{Error, Result};
