//! Simulation library for non-stationary kernelized bandits.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernels`] | SE and half-integer Matérn kernels, Gram matrices |
//! | [`gp`] | GP posterior, information gain, incremental factor updates |
//! | [`environment`] | Drifting RKHS reward schedules over a finite grid |
//! | [`algorithms`] | R-PERP and the R-GP-UCB / SW-GP-UCB / Random baselines |
//! | [`theory`] | Regret-rate calculators |
//! | [`harness`] | Config-driven experiments, CSV/JSON persistence, SVG plots |
//!
//! Every policy is a deterministic function of its configuration and the
//! random generator it is handed, so runs are reproducible bit-for-bit.

pub mod algorithms;
pub mod environment;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod theory;

pub use error::{Error, Result};
