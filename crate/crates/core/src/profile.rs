//! Model size, compute and latency measurement.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How a parameter tensor is treated by the optimizer and the counters.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    /// Learnable, weight decay applies (conv kernels).
    Weight,
    /// Learnable, excluded from weight decay (biases, BN gamma/beta).
    Affine,
    /// Not learnable (running statistics); excluded from parameter counts.
    Buffer,
}

/// A named tensor in a model's state.
pub struct NamedParam<S: Scalar> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub kind: ParamKind,
}

/// Learnable-element count over a collected parameter list.
pub fn count_params<S: Scalar>(params: &[NamedParam<S>]) -> u64 {
    params
        .iter()
        .filter(|p| p.kind != ParamKind::Buffer)
        .map(|p| p.tensor.numel() as u64)
        .sum()
}

/// Analytic compute tally for one forward pass.
///
/// `macs` counts multiply-accumulates in convolutions; `elementwise` counts
/// per-element passes of BN, activations, pooling, resize and arithmetic.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct Counts {
    pub macs: u64,
    pub elementwise: u64,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.macs += other.macs;
        self.elementwise += other.elementwise;
    }

    /// Total under the MACs convention (one MAC = one op).
    pub fn total_macs(&self) -> u64 {
        self.macs + self.elementwise
    }

    /// Total under the 2x convention (one MAC = two FLOPs).
    pub fn total_flops2x(&self) -> u64 {
        2 * self.macs + self.elementwise
    }
}

/// Declared FLOP-counting convention for reports.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlopConvention {
    Macs,
    Flops2x,
}

/// Latency statistics of repeated single-input forward passes.
#[derive(Clone, Debug)]
pub struct LatencyReport {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub fps: f64,
}

/// Wall-clock benchmark of `f`, discarding `warmup` runs then timing `reps`.
pub fn bench_latency(mut f: impl FnMut(), warmup: usize, reps: usize) -> Result<LatencyReport> {
    if warmup < 1 || reps < 10 {
        return Err(Error::usage("bench_latency requires warmup >= 1 and reps >= 10"));
    }
    for _ in 0..warmup {
        f();
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f();
        samples.push(t0.elapsed().as_secs_f64());
    }
    let mean = samples.iter().sum::<f64>() / reps as f64;
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[reps / 2];
    let p95 = sorted[((reps as f64 * 0.95) as usize).min(reps - 1)];
    Ok(LatencyReport {
        samples,
        mean,
        median,
        p95,
        fps: 1.0 / mean,
    })
}
