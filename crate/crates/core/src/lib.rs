pub mod config;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod recon;
pub mod stream;
pub mod train;

pub use error::{Error, Result};
