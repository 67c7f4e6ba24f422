//! Order-by-order construction of time-dependent effective potentials for
//! few-body systems on a 1D lattice.

pub mod error;
pub mod grid;
pub mod quantum;
pub mod sturm;
pub mod taylor;
pub mod verify;

pub use error::{Error, Result};

/// Version recorded in every report and output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
