//! Connectome-derived reservoir computing: ingestion, frozen unroll with exact
//! gradients, signed DCSBM expansion and projection training.

pub mod connectome;
pub mod dcsbm;
pub mod error;
pub mod readout;
pub mod reservoir;
pub mod sparse;
pub mod surrogate;
pub mod vision;

pub use error::{Error, Result};
