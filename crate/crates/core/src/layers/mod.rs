//! Forward and backward kernels for every layer kind the networks use.
//!
//! Kernels are free functions over [`Tensor`](crate::Tensor) values; the
//! stateful wrappers that cache activations for training live in
//! [`arch`](crate::arch).

mod activation;
mod conv;
mod loss;
mod norm;
mod resample;

pub use activation::{prelu_backward, prelu_forward, PReluParams, DEFAULT_PRELU_SLOPE};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeom, ConvGrads, ConvParams};
pub use loss::{softmax, softmax_xent, CLASS_COUNT};
pub use norm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, BnCache, BnGrads, BnParams,
};
pub use resample::{
    concat_channels, maxpool2x2_backward, maxpool2x2_forward, split_channels, upsample_nearest2x,
    upsample_nearest2x_backward, PoolIndices,
};

/// Whether layers use batch statistics (and update running ones) or the
/// frozen running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
