//! Stiff time integration and event location.

mod bdf;
mod roots;

pub use bdf::{Bdf, BdfError, BdfOptions, BdfStats, OdeSystem};
pub use roots::find_root;
