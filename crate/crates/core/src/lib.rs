pub mod alignments;
pub mod cli;
pub mod config;
pub mod data;
pub mod decoding;
pub mod diagnostics;
pub mod error;
pub mod keyvalue;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
