//! Cross-CBAM: a lightweight real-time semantic segmentation network, built
//! from scratch on a small reverse-mode autodiff tensor engine.
//!
//! The crate is organized bottom-up:
//! - [`tensor`] / [`tape`] / [`ops`]: dense NCHW tensors, the operation set the
//!   network needs, and reverse-mode gradient propagation
//! - [`layers`], [`stdc`], [`attention`], [`seaspp`], [`network`]: the model,
//!   from Conv-BN-ReLU primitives up to the full assembled net
//! - [`objective`], [`optim`]: composite CE + focal loss, SGD with momentum and
//!   the poly learning-rate schedule
//! - [`metrics`], [`profile`]: mIoU bookkeeping, parameter/FLOP counting and
//!   latency benchmarking
//! - [`data`], [`imgio`], [`checkpoint`], [`config`]: synthetic scenes,
//!   augmentation, PNG/PPM I/O, the XCBM checkpoint format and run configs
//!
//! All numeric code is generic over the scalar type ([`scalar::Scalar`]):
//! `f32` for training and inference, `f64` for gradient checking.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod imgio;
pub mod init;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod ops;
pub mod optim;
pub mod profile;
pub mod scalar;
pub mod seaspp;
pub mod stdc;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{LabelMap, Shape, Tensor};

/// Single-precision tensor, the training/inference type.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor, mandatory for gradient checking.
pub type Tensor64 = Tensor<f64>;

pub type Model32 = network::Model<f32>;
pub type Model64 = network::Model<f64>;
