//! Differentiable primitives as pure functions. The [`crate::tape::Tape`] records
//! them and calls the matching `*_backward` routines in reverse order.

mod conv;
mod elementwise;
mod sample;

pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvSpec};
pub use elementwise::{
    activate, activate_backward, concat_backward, concat_channels, log_softmax_backward,
    log_softmax_channels, scale_channels, scale_channels_backward, Activation,
};
pub use sample::{
    maxpool2x2, maxpool2x2_backward, maxunpool2x2, maxunpool2x2_backward, pooled_shape,
    upsample_bilinear2x, upsample_bilinear2x_backward, PoolIndices,
};
