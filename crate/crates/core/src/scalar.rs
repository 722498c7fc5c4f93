//! Scalar abstraction: the whole engine is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type for tensors.
///
/// `f32` is the training/inference precision; `f64` is required by the
/// finite-difference gradient oracle so tolerances stay tight.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and hyperparameters.
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable")
    }
    fn to_f64c(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64c(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64c(self) -> f64 {
        self
    }
}
