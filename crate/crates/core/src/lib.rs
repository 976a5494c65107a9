//! Numerical laboratory for decay through a delta-shell barrier: resonance
//! poles, the exact survival amplitude split into pole and background parts,
//! a finite-width barrier TDSE cross-check, and fits of the decay regimes.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod experiment;
pub mod model;
pub mod poles;
pub mod propagator;
pub mod quadrature;
pub mod tables;
pub mod tdse;

pub use error::{Error, Result};
pub use model::{ComplexMomentum, InitialState, ModelParams, C64};

/// Library version, recorded in the provenance of every output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
