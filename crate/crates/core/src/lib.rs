pub mod distributions;
pub mod error;
pub mod noise_sim;
pub mod clustering;
pub mod redistribution;
pub mod engine;
pub mod estimator;
pub mod cli;

pub use error::{Error, Result};
