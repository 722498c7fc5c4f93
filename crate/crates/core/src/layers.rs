//! Layer primitives: convolution, batch norm and the ConvX (Conv-BN-ReLU)
//! building block everything else is assembled from.

use crate::error::Result;
use crate::init::ParamInit;
use crate::ops;
use crate::ops::conv::conv_out_shape;
use crate::profile::{Counts, NamedParam, ParamKind};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub struct Conv2d<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Option<Tensor<S>>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl<S: Scalar> Conv2d<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut ParamInit,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
        bias: bool,
    ) -> Self {
        let weight = init.conv_weight(out_ch, in_ch, k, k);
        let bias = bias.then(|| init.zeros_param(out_ch));
        Conv2d {
            weight,
            bias,
            stride,
            padding,
            dilation,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        ops::conv2d(
            x,
            &self.weight,
            self.bias.as_ref(),
            self.stride,
            self.padding,
            self.dilation,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        out.push(NamedParam {
            name: format!("{prefix}.weight"),
            tensor: self.weight.clone(),
            kind: ParamKind::Weight,
        });
        if let Some(b) = &self.bias {
            out.push(NamedParam {
                name: format!("{prefix}.bias"),
                tensor: b.clone(),
                kind: ParamKind::Affine,
            });
        }
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<Shape> {
        let os = conv_out_shape(in_shape, self.weight.shape(), self.stride, self.padding, self.dilation)?;
        let ws = self.weight.shape();
        counts.macs += (os.numel() * ws.c * ws.h * ws.w) as u64;
        if self.bias.is_some() {
            counts.elementwise += os.numel() as u64;
        }
        Ok(os)
    }
}

pub struct BatchNorm2d<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub eps: f64,
    pub momentum: f64,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(init: &mut ParamInit, channels: usize) -> Self {
        BatchNorm2d {
            gamma: init.ones_param(channels),
            beta: init.zeros_param(channels),
            running_mean: init.buffer(channels, S::zero()),
            running_var: init.buffer(channels, S::one()),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn forward(&self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        ops::batch_norm(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            self.eps,
            self.momentum,
            train,
        )
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        out.push(NamedParam {
            name: format!("{prefix}.gamma"),
            tensor: self.gamma.clone(),
            kind: ParamKind::Affine,
        });
        out.push(NamedParam {
            name: format!("{prefix}.beta"),
            tensor: self.beta.clone(),
            kind: ParamKind::Affine,
        });
        out.push(NamedParam {
            name: format!("{prefix}.running_mean"),
            tensor: self.running_mean.clone(),
            kind: ParamKind::Buffer,
        });
        out.push(NamedParam {
            name: format!("{prefix}.running_var"),
            tensor: self.running_var.clone(),
            kind: ParamKind::Buffer,
        });
    }

    pub fn profile(&self, shape: Shape, counts: &mut Counts) -> Shape {
        counts.elementwise += shape.numel() as u64;
        shape
    }
}

/// Conv-BN-ReLU block. The convolution carries no bias; the BN affine does
/// that job.
pub struct ConvX<S: Scalar> {
    pub conv: Conv2d<S>,
    pub bn: BatchNorm2d<S>,
}

impl<S: Scalar> ConvX<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut ParamInit,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Self {
        ConvX {
            conv: Conv2d::new(init, in_ch, out_ch, k, stride, padding, dilation, false),
            bn: BatchNorm2d::new(init, out_ch),
        }
    }

    pub fn forward(&self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y, train)?;
        Ok(ops::relu(&y))
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.conv.params(&format!("{prefix}.conv"), out);
        self.bn.params(&format!("{prefix}.bn"), out);
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<Shape> {
        let s = self.conv.profile(in_shape, counts)?;
        let s = self.bn.profile(s, counts);
        counts.elementwise += s.numel() as u64; // relu
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn convx_shapes_and_param_names() {
        let mut init = ParamInit::new(0);
        let cx = ConvX::<f32>::new(&mut init, 3, 8, 3, 2, 1, 1);
        let x = Tensor::zeros(Shape::new(1, 3, 8, 8));
        let y = cx.forward(&x, false).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 8, 4, 4));
        let mut ps = Vec::new();
        cx.params("stem", &mut ps);
        let names: Vec<_> = ps.iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"stem.conv.weight"));
        assert!(names.contains(&"stem.bn.gamma"));
    }

    #[test]
    fn profile_matches_forward_shape() {
        let mut init = ParamInit::new(0);
        let cx = ConvX::<f32>::new(&mut init, 4, 6, 3, 1, 1, 1);
        let mut counts = Counts::default();
        let s = cx.profile(Shape::new(2, 4, 10, 10), &mut counts).unwrap();
        assert_eq!(s, Shape::new(2, 6, 10, 10));
        // conv macs: out elems * in_ch * k * k
        assert_eq!(counts.macs, (2 * 6 * 10 * 10 * 4 * 9) as u64);
    }
}
