//! Simulation and analysis of a two-cavity microwave dimer with saturable,
//! phase-non-reciprocal hopping: stability, limit cycles, spectra, sweeps and
//! device calibration.

pub mod error;
pub mod analytics;
pub mod calibration;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod fit;
pub mod integrator;
pub mod mat2;
pub mod model;
pub mod render;
pub mod spectral;
pub mod stability;
pub mod units;
pub mod validate;

pub use error::{Error, Result};
pub use model::{Cavity, DissipationModel, FieldState, OperatingPoint, PhysicalParams};
