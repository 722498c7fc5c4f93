//! Channel attention, spatial attention, the SE block and the CCBAM
//! cross-fusion.

use crate::error::{Error, Result};
use crate::init::ParamInit;
use crate::layers::Conv2d;
use crate::ops::{self, PoolKind};
use crate::profile::{Counts, NamedParam};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const REDUCTION_RATIO: usize = 16;

/// Per-channel gate from pooled global descriptors:
/// `sigmoid(mlp(maxpool(x)) + mlp(avgpool(x)))`.
///
/// The two pooled branches share one bottleneck by default. A separate
/// bottleneck for the max branch can be attached instead, which is the only
/// structural alternative the equation admits.
pub struct ChannelAttention<S: Scalar> {
    pub reduce: Conv2d<S>,
    pub expand: Conv2d<S>,
    /// Optional non-shared bottleneck for the max-pool branch.
    pub max_branch: Option<(Conv2d<S>, Conv2d<S>)>,
}

fn check_reduction(c: usize, what: &str) -> Result<usize> {
    if c % REDUCTION_RATIO != 0 {
        return Err(Error::config(format!(
            "{what}: {c} channels not divisible by reduction ratio {REDUCTION_RATIO}"
        )));
    }
    Ok(c / REDUCTION_RATIO)
}

impl<S: Scalar> ChannelAttention<S> {
    pub fn new(init: &mut ParamInit, channels: usize) -> Result<Self> {
        let mid = check_reduction(channels, "channel attention")?;
        Ok(ChannelAttention {
            reduce: Conv2d::new(init, channels, mid, 1, 1, 0, 1, true),
            expand: Conv2d::new(init, mid, channels, 1, 1, 0, 1, true),
            max_branch: None,
        })
    }

    fn bottleneck(&self, x: &Tensor<S>, convs: (&Conv2d<S>, &Conv2d<S>)) -> Result<Tensor<S>> {
        let y = convs.0.forward(x)?;
        let y = ops::relu(&y);
        convs.1.forward(&y)
    }

    /// Attention map of shape (n, C, 1, 1), values strictly in (0,1).
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mx = ops::global_pool(x, PoolKind::Max)?;
        let av = ops::global_pool(x, PoolKind::Avg)?;
        let max_convs = match &self.max_branch {
            Some((r, e)) => (r, e),
            None => (&self.reduce, &self.expand),
        };
        let bm = self.bottleneck(&mx, max_convs)?;
        let ba = self.bottleneck(&av, (&self.reduce, &self.expand))?;
        Ok(ops::sigmoid(&ops::add(&bm, &ba)?))
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.reduce.params(&format!("{prefix}.reduce"), out);
        self.expand.params(&format!("{prefix}.expand"), out);
        if let Some((r, e)) = &self.max_branch {
            r.params(&format!("{prefix}.max_reduce"), out);
            e.params(&format!("{prefix}.max_expand"), out);
        }
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<()> {
        // two global pools
        counts.elementwise += 2 * in_shape.numel() as u64;
        let pooled = Shape::new(in_shape.n, in_shape.c, 1, 1);
        for _ in 0..2 {
            let mid = self.reduce.profile(pooled, counts)?;
            counts.elementwise += mid.numel() as u64; // relu
            self.expand.profile(mid, counts)?;
        }
        counts.elementwise += 2 * pooled.numel() as u64; // sum + sigmoid
        Ok(())
    }
}

/// Per-position gate: channel-axis max and mean maps, concatenated (max
/// first), 1x1 conv to one channel, sigmoid.
pub struct SpatialAttention<S: Scalar> {
    pub fuse: Conv2d<S>,
}

impl<S: Scalar> SpatialAttention<S> {
    pub fn new(init: &mut ParamInit) -> Self {
        SpatialAttention {
            fuse: Conv2d::new(init, 2, 1, 1, 1, 0, 1, true),
        }
    }

    /// Attention map of shape (n, 1, h, w), values strictly in (0,1).
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mx = ops::channelwise_reduce(x, PoolKind::Max)?;
        let av = ops::channelwise_reduce(x, PoolKind::Avg)?;
        let cat = ops::concat_channels(&[mx, av])?;
        Ok(ops::sigmoid(&self.fuse.forward(&cat)?))
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.fuse.params(&format!("{prefix}.fuse"), out);
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<()> {
        counts.elementwise += 2 * in_shape.numel() as u64; // channel reduces
        let cat = Shape::new(in_shape.n, 2, in_shape.h, in_shape.w);
        let out = self.fuse.profile(cat, counts)?;
        counts.elementwise += out.numel() as u64; // sigmoid
        Ok(())
    }
}

/// Squeeze-and-excitation: global average squeeze, bottleneck, sigmoid gates,
/// channel-wise rescale of the input.
pub struct SeBlock<S: Scalar> {
    pub reduce: Conv2d<S>,
    pub expand: Conv2d<S>,
}

impl<S: Scalar> SeBlock<S> {
    pub fn new(init: &mut ParamInit, channels: usize) -> Result<Self> {
        let mid = check_reduction(channels, "SE block")?;
        Ok(SeBlock {
            reduce: Conv2d::new(init, channels, mid, 1, 1, 0, 1, true),
            expand: Conv2d::new(init, mid, channels, 1, 1, 0, 1, true),
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let squeezed = ops::global_pool(x, PoolKind::Avg)?;
        let y = ops::relu(&self.reduce.forward(&squeezed)?);
        let gates = ops::sigmoid(&self.expand.forward(&y)?);
        ops::mul(x, &gates)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.reduce.params(&format!("{prefix}.reduce"), out);
        self.expand.params(&format!("{prefix}.expand"), out);
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<()> {
        counts.elementwise += in_shape.numel() as u64; // squeeze
        let pooled = Shape::new(in_shape.n, in_shape.c, 1, 1);
        let mid = self.reduce.profile(pooled, counts)?;
        counts.elementwise += mid.numel() as u64;
        let g = self.expand.profile(mid, counts)?;
        counts.elementwise += g.numel() as u64; // sigmoid
        counts.elementwise += in_shape.numel() as u64; // rescale
        Ok(())
    }
}

/// Cross attention fusion of a high-level (decoder) and a low-level (encoder)
/// feature map:
///
/// ```text
/// C_high = CA(input_high)          C_low = CA(input_low)
/// F_high = input_low * C_high      F_low = input_high * C_low
/// S_high = SA(F_high)              S_low = SA(F_low)
/// Output = F_low * S_high + F_high * S_low
/// ```
pub struct Ccbam<S: Scalar> {
    pub ca_high: ChannelAttention<S>,
    pub ca_low: ChannelAttention<S>,
    pub sa_high: SpatialAttention<S>,
    pub sa_low: SpatialAttention<S>,
}

impl<S: Scalar> Ccbam<S> {
    pub fn new(init: &mut ParamInit, channels: usize) -> Result<Self> {
        Ok(Ccbam {
            ca_high: ChannelAttention::new(init, channels)?,
            ca_low: ChannelAttention::new(init, channels)?,
            sa_high: SpatialAttention::new(init),
            sa_low: SpatialAttention::new(init),
        })
    }

    pub fn forward(&self, input_high: &Tensor<S>, input_low: &Tensor<S>) -> Result<Tensor<S>> {
        if input_high.shape() != input_low.shape() {
            return Err(Error::usage(format!(
                "CCBAM inputs must match: high {} vs low {}",
                input_high.shape(),
                input_low.shape()
            )));
        }
        let c_high = self.ca_high.forward(input_high)?;
        let c_low = self.ca_low.forward(input_low)?;
        let f_high = ops::mul(input_low, &c_high)?;
        let f_low = ops::mul(input_high, &c_low)?;
        let s_high = self.sa_high.forward(&f_high)?;
        let s_low = self.sa_low.forward(&f_low)?;
        let o_high = ops::mul(&f_low, &s_high)?;
        let o_low = ops::mul(&f_high, &s_low)?;
        ops::add(&o_high, &o_low)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.ca_high.params(&format!("{prefix}.ca_high"), out);
        self.ca_low.params(&format!("{prefix}.ca_low"), out);
        self.sa_high.params(&format!("{prefix}.sa_high"), out);
        self.sa_low.params(&format!("{prefix}.sa_low"), out);
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<()> {
        self.ca_high.profile(in_shape, counts)?;
        self.ca_low.profile(in_shape, counts)?;
        counts.elementwise += 2 * in_shape.numel() as u64; // the two F products
        self.sa_high.profile(in_shape, counts)?;
        self.sa_low.profile(in_shape, counts)?;
        counts.elementwise += 3 * in_shape.numel() as u64; // two O products + add
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill_zero<S: Scalar>(t: &Tensor<S>) {
        t.data_mut().iter_mut().for_each(|v| *v = S::zero());
    }

    fn zeroed_ccbam(channels: usize) -> Ccbam<f64> {
        let mut init = ParamInit::new(3);
        let m = Ccbam::<f64>::new(&mut init, channels).unwrap();
        for ca in [&m.ca_high, &m.ca_low] {
            fill_zero(&ca.reduce.weight);
            fill_zero(ca.reduce.bias.as_ref().unwrap());
            fill_zero(&ca.expand.weight);
            fill_zero(ca.expand.bias.as_ref().unwrap());
        }
        for sa in [&m.sa_high, &m.sa_low] {
            fill_zero(&sa.fuse.weight);
            fill_zero(sa.fuse.bias.as_ref().unwrap());
        }
        m
    }

    #[test]
    fn channel_attention_rejects_bad_width() {
        let mut init = ParamInit::new(0);
        assert!(ChannelAttention::<f32>::new(&mut init, 20).is_err());
    }

    #[test]
    fn zero_weights_give_half_gates() {
        let m = zeroed_ccbam(16);
        let x = Tensor::<f64>::from_vec(
            Shape::new(1, 16, 2, 2),
            (0..64).map(|v| v as f64 / 64.0).collect(),
        )
        .unwrap();
        let ca = m.ca_high.forward(&x).unwrap();
        for v in ca.data().iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let sa = m.sa_high.forward(&x).unwrap();
        for v in sa.data().iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn ccbam_zero_weights_quarter_sum() {
        let m = zeroed_ccbam(16);
        let shape = Shape::new(1, 16, 3, 3);
        let hi =
            Tensor::<f64>::from_vec(shape, (0..shape.numel()).map(|v| (v as f64).sin()).collect())
                .unwrap();
        let lo =
            Tensor::<f64>::from_vec(shape, (0..shape.numel()).map(|v| (v as f64).cos()).collect())
                .unwrap();
        let out = m.forward(&hi, &lo).unwrap();
        let hd = hi.data();
        let ld = lo.data();
        for (i, v) in out.data().iter().enumerate() {
            assert!((v - 0.25 * (hd[i] + ld[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn ccbam_shape_mismatch_names_dims() {
        let mut init = ParamInit::new(0);
        let m = Ccbam::<f32>::new(&mut init, 16).unwrap();
        let a = Tensor::zeros(Shape::new(1, 16, 4, 4));
        let b = Tensor::zeros(Shape::new(1, 16, 8, 8));
        let err = m.forward(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(1,16,4,4)") && err.contains("(1,16,8,8)"));
    }

    #[test]
    fn se_block_preserves_sign() {
        let mut init = ParamInit::new(9);
        let se = SeBlock::<f64>::new(&mut init, 16).unwrap();
        let shape = Shape::new(1, 16, 2, 2);
        let x = Tensor::<f64>::from_vec(
            shape,
            (0..shape.numel()).map(|v| ((v as f64) - 31.5) / 7.0).collect(),
        )
        .unwrap();
        let y = se.forward(&x).unwrap();
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            assert!(a.signum() == b.signum() || *a == 0.0);
        }
    }
}
