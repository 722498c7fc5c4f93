//! Seeded, reproducible parameter initialization.
//!
//! Conv weights use Kaiming fan-in scaling (normal, std = sqrt(2/fan_in)),
//! batch-norm starts at gamma=1/beta=0, biases at zero. All draws come from a
//! ChaCha stream so two builds from the same seed are bit-identical on any
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        ParamInit {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Kaiming-initialized conv weight (out_ch, in_ch, kh, kw).
    pub fn conv_weight<S: Scalar>(&mut self, out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Tensor<S> {
        let fan_in = (in_ch * kh * kw) as f64;
        let std = (2.0 / fan_in).sqrt();
        let shape = Shape::new(out_ch, in_ch, kh, kw);
        let data: Vec<S> = (0..shape.numel())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                S::from_f64c(z * std)
            })
            .collect();
        Tensor::param(shape, data).expect("conv weight init")
    }

    pub fn zeros_param<S: Scalar>(&mut self, len: usize) -> Tensor<S> {
        Tensor::param(Shape::new(1, len, 1, 1), vec![S::zero(); len]).expect("zero param")
    }

    pub fn ones_param<S: Scalar>(&mut self, len: usize) -> Tensor<S> {
        Tensor::param(Shape::new(1, len, 1, 1), vec![S::one(); len]).expect("one param")
    }

    /// Non-learnable per-channel buffer (running statistics).
    pub fn buffer<S: Scalar>(&mut self, len: usize, v: S) -> Tensor<S> {
        Tensor::full(Shape::new(1, len, 1, 1), v)
    }
}
