//! Correlation OTDR laboratory.
//!
//! Simulates a monitored fiber (Rayleigh backscatter, Fresnel reflections,
//! thermal and acoustic perturbations) and runs the probing, detection,
//! correlation and evaluation chain used to monitor delay, amplitude and
//! phase along the fiber.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod archive;
pub mod cli;
pub mod correlator;
pub mod error;
pub mod fbg;
pub mod fibermodel;
pub mod frontend;
pub mod pipeline;
pub mod probegen;
pub mod runner;
pub mod scenario;

pub use error::{Error, Result};
