//! Core-shell enhanced single particle model of a LiFePO4/graphite cell:
//! model equations, time integration with phase-regime switching, and
//! swarm-based parameter identification.

// Validation uses `!(x > 0.0)` style tests on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod electrolyte;
pub mod error;
pub mod identify;
pub mod negative;
pub mod ode;
pub mod positive;
pub mod sim;
pub mod sphere;
pub mod voltage;

pub use config::{CellConfig, CellParameters, DerivedGeometry, ModelOptions, Theta};
pub use error::{ConfigError, ModelError, SimError};
