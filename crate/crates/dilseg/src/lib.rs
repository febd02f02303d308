//! File formats, dataset directories, training and evaluation
//! orchestration, and the command-line interface on top of `dilseg-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod pgm;

pub use error::{IoError, IoResult};
