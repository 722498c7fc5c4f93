//! The tensor operation set: forward kernels build tape records, backward
//! kernels are dispatched from [`crate::tape`].

pub mod bn;
pub mod conv;
pub mod eltwise;
pub mod loss;
pub mod pool;
pub mod resize;

pub use bn::batch_norm;
pub use conv::conv2d;
pub use eltwise::{add, axpby, concat_channels, mul, relu, scale, sigmoid, sum_all};
pub use loss::softmax_focal_ce;
pub use pool::{channelwise_reduce, global_pool, pool2d, PoolKind};
pub use resize::bilinear_resize;
