//! Simulation and exact-verification toolkit for the zero-range process with a
//! source at the origin in the diverging-density regime `lambda_n = 1 - b/n`.

pub mod engine;
pub mod error;
pub mod exact;
pub mod exclusion;
pub mod fields;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod she;
pub mod stats;

pub use error::{Error, Result};
