//! Core of a multi-class semantic segmentation engine built around UNet
//! variants with dilated and progressively dilated convolutional blocks.
//!
//! Everything in this crate needs only `alloc`: dense tensors, layer
//! kernels with hand-written backward passes, network assembly, receptive
//! field analysis, optimizers, segmentation metrics and a synthetic
//! phantom generator. File formats, dataset directories and the
//! command-line interface live in the `dilseg` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arch;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod rfield;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
