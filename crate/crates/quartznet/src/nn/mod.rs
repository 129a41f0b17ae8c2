//! Neural network layers: 1D convolutions (regular, depthwise, grouped
//! pointwise with shuffle), batch normalization, dropout, and the residual
//! block structure used by the acoustic models.

mod block;
mod conv;
mod dropout;
mod norm;

pub use block::{ConvModule, ModuleConv, ResidualBlock};
pub use conv::{channel_shuffle, mask_time, shuffle_permutation, Conv1d, ConvKind, TcsConv};
pub use dropout::dropout;
pub use norm::{BatchNorm1d, Mode};
mod softmax;

pub use softmax::log_softmax_channels;
