//! Frequency-domain identification of squared slowness and nonlinearity in the
//! time-periodic JMGT equation from two amplitude-modulated sources.

pub mod error;
pub mod forward;
pub mod norms;
pub mod poles;
pub mod quasirev;
pub mod reconstruct;
pub mod sources;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
