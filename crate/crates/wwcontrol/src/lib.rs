//! Numerical construction and verification of localized pressure controls for
//! periodic gravity-capillary water waves.

pub mod control;
pub mod error;
pub mod evolution;
pub mod ingham;
pub mod io;
pub mod linalg;
pub mod paradiff;
pub mod reduction;
pub mod spectral;
pub mod transform;
pub mod waterwave;

pub use error::{Error, Result};
pub use spectral::{Depth, Field, Grid, MultiplierKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
