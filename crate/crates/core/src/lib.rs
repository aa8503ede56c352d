pub mod analysis;
pub mod cli;
pub mod autodiff;
pub mod data;
pub mod dsp;
pub mod encoder;
pub mod enhancer;
pub mod error;
pub mod fsutil;
pub mod fusion;
pub mod gradsuite;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod threads;

pub use error::{Error, Result};
