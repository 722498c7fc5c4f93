//! Squeeze-and-Excitation Atrous Spatial Pyramid Pooling context head.
//!
//! Parallel atrous ConvX branches (rate 1 is a 1x1 conv; every higher rate a
//! 3x3 conv with that dilation) are summed elementwise. In place of the
//! classic image-pooling branch, the input passes a 1x1 channel reduction and
//! an SE block. Sum and SE output are concatenated and a 3x3 ConvX transforms
//! the result back to `branch_ch` channels. There is no pooling-and-resize
//! branch.

use crate::attention::SeBlock;
use crate::error::{Error, Result};
use crate::init::ParamInit;
use crate::layers::ConvX;
use crate::ops;
use crate::profile::{Counts, NamedParam};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeAsppConfig {
    pub in_ch: usize,
    pub branch_ch: usize,
    pub dilations: Vec<usize>,
    /// When set, the SE block gates the atrous sum instead of the reduced
    /// input (the alternative reading of the dataflow).
    pub se_on_sum: bool,
}

impl SeAsppConfig {
    pub fn new(in_ch: usize, branch_ch: usize, dilations: Vec<usize>) -> Self {
        SeAsppConfig {
            in_ch,
            branch_ch,
            dilations,
            se_on_sum: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dilations.is_empty() {
            return Err(Error::config("SE-ASPP needs at least one dilation rate"));
        }
        if self.dilations.iter().any(|&d| d == 0) {
            return Err(Error::config("SE-ASPP dilation rates must be positive"));
        }
        Ok(())
    }
}

pub struct SeAspp<S: Scalar> {
    pub cfg: SeAsppConfig,
    branches: Vec<ConvX<S>>,
    se_reduce: ConvX<S>,
    se: SeBlock<S>,
    fuse: ConvX<S>,
}

impl<S: Scalar> SeAspp<S> {
    pub fn new(init: &mut ParamInit, cfg: SeAsppConfig) -> Result<Self> {
        cfg.validate()?;
        let branches = cfg
            .dilations
            .iter()
            .map(|&d| {
                if d == 1 {
                    ConvX::new(init, cfg.in_ch, cfg.branch_ch, 1, 1, 0, 1)
                } else {
                    // padding == dilation keeps spatial dims for a 3x3 kernel
                    ConvX::new(init, cfg.in_ch, cfg.branch_ch, 3, 1, d, d)
                }
            })
            .collect();
        Ok(SeAspp {
            se_reduce: ConvX::new(init, cfg.in_ch, cfg.branch_ch, 1, 1, 0, 1),
            se: SeBlock::new(init, cfg.branch_ch)?,
            fuse: ConvX::new(init, 2 * cfg.branch_ch, cfg.branch_ch, 3, 1, 1, 1),
            branches,
            cfg,
        })
    }

    pub fn forward(&self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        if x.shape().c != self.cfg.in_ch {
            return Err(Error::config(format!(
                "SE-ASPP expects {} input channels, got {}",
                self.cfg.in_ch,
                x.shape().c
            )));
        }
        let mut sum: Option<Tensor<S>> = None;
        for b in &self.branches {
            let y = b.forward(x, train)?;
            sum = Some(match sum {
                None => y,
                Some(acc) => ops::add(&acc, &y)?,
            });
        }
        let sum = sum.expect("validated non-empty dilations");
        let se_out = if self.cfg.se_on_sum {
            self.se.forward(&sum)?
        } else {
            let reduced = self.se_reduce.forward(x, train)?;
            self.se.forward(&reduced)?
        };
        let cat = ops::concat_channels(&[sum, se_out])?;
        self.fuse.forward(&cat, train)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        for (b, d) in self.branches.iter().zip(&self.cfg.dilations) {
            b.params(&format!("{prefix}.rate{d}"), out);
        }
        self.se_reduce.params(&format!("{prefix}.se_reduce"), out);
        self.se.params(&format!("{prefix}.se"), out);
        self.fuse.params(&format!("{prefix}.fuse"), out);
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<Shape> {
        let mut branch_shape = in_shape;
        for (i, b) in self.branches.iter().enumerate() {
            branch_shape = b.profile(in_shape, counts)?;
            if i > 0 {
                counts.elementwise += branch_shape.numel() as u64; // running sum
            }
        }
        if self.cfg.se_on_sum {
            self.se.profile(branch_shape, counts)?;
        } else {
            let reduced = self.se_reduce.profile(in_shape, counts)?;
            self.se.profile(reduced, counts)?;
        }
        let cat = Shape::new(in_shape.n, 2 * self.cfg.branch_ch, in_shape.h, in_shape.w);
        self.fuse.profile(cat, counts)
    }
}

/// Closed-form learnable-parameter count of [`SeAspp`]; must agree exactly
/// with the generic model walker.
pub fn se_aspp_param_count(cfg: &SeAsppConfig) -> u64 {
    let inc = cfg.in_ch as u64;
    let bc = cfg.branch_ch as u64;
    let convx = |k: u64, i: u64, o: u64| k * k * i * o + 2 * o;
    let mut total = 0u64;
    for &d in &cfg.dilations {
        total += if d == 1 { convx(1, inc, bc) } else { convx(3, inc, bc) };
    }
    // SE path: 1x1 ConvX reduction, then the two biased SE convs
    let mid = bc / 16;
    total += convx(1, inc, bc);
    total += bc * mid + mid; // se reduce
    total += mid * bc + bc; // se expand
    // final 3x3 transform from the concatenated 2*bc channels
    total += convx(3, 2 * bc, bc);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::count_params;

    #[test]
    fn output_shape_preserved() {
        let mut init = ParamInit::new(0);
        let cfg = SeAsppConfig::new(64, 32, vec![1, 3]);
        let m = SeAspp::<f32>::new(&mut init, cfg).unwrap();
        let x = Tensor::zeros(Shape::new(1, 64, 6, 10));
        assert_eq!(m.forward(&x, false).unwrap().shape(), Shape::new(1, 32, 6, 10));
    }

    #[test]
    fn dilation_list_changes_params_not_shape() {
        let mut init = ParamInit::new(0);
        let a = SeAspp::<f32>::new(&mut init, SeAsppConfig::new(64, 32, vec![1, 3])).unwrap();
        let b = SeAspp::<f32>::new(&mut init, SeAsppConfig::new(64, 32, vec![1, 3, 5])).unwrap();
        let x = Tensor::zeros(Shape::new(1, 64, 4, 4));
        assert_eq!(
            a.forward(&x, false).unwrap().shape(),
            b.forward(&x, false).unwrap().shape()
        );
    }

    #[test]
    fn closed_form_matches_walker() {
        for dil in [vec![1, 3], vec![1, 3, 5], vec![2, 4]] {
            let mut init = ParamInit::new(0);
            let cfg = SeAsppConfig::new(1024, 256, dil);
            let m = SeAspp::<f32>::new(&mut init, cfg.clone()).unwrap();
            let mut ps = Vec::new();
            m.params("aspp", &mut ps);
            assert_eq!(count_params(&ps), se_aspp_param_count(&cfg));
        }
    }

    #[test]
    fn param_count_monotone_in_width() {
        let a = se_aspp_param_count(&SeAsppConfig::new(1024, 256, vec![1, 3]));
        let b = se_aspp_param_count(&SeAsppConfig::new(1024, 512, vec![1, 3]));
        assert!(b > a);
    }
}
