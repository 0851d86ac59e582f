//! Functional multiple regression on the sphere with long-range dependent
//! functional errors.

pub mod error;
pub mod experiment;
pub mod harmonics;
pub mod lrd;
pub mod optimize;
pub mod regression;
pub mod residuals;
pub mod rng;
pub mod sample;
pub mod spectral;
pub mod toeplitz;

pub use error::{Error, Result};
