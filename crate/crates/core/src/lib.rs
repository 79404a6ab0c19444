//! Concentration bounds for the spectra of random kernel matrices and for kernel target alignment.

pub mod alignment;
pub mod bounds;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod randmat;
pub mod spectral;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
