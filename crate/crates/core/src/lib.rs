//! Simulation and post-processing toolkit for scattering-based quantum random
//! number generation: photon-statistics signal synthesis, signal analysis,
//! digitisation, min-entropy estimation, LFSR extraction and randomness tests.

pub mod analysis;
pub mod battery;
pub mod config;
pub mod bits;
pub mod digitizer;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod io;
pub mod pipeline;
pub mod signal;

pub use bits::BitStream;
pub use error::{Error, Result};
