//! Short-Term Dense Concatenate backbone (STDC1/STDC2).
//!
//! Each STDC module splits its width across four Conv-BN-ReLU blocks whose
//! channel counts halve progressively (N/2, N/4, N/8, N/8) and concatenates
//! all block outputs. Stride-2 modules convolve block 2 with stride 2 and
//! average-pool block 1's output (3x3, stride 2, pad 1) so every piece lands
//! at half resolution before concatenation.

use crate::error::{Error, Result};
use crate::init::ParamInit;
use crate::layers::ConvX;
use crate::ops;
use crate::profile::{Counts, NamedParam};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Blocks per STDC module. A config constant rather than a per-module knob:
/// both published variants use four.
pub const STDC_N_BLOCKS: usize = 4;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    Stdc1,
    Stdc2,
}

impl Variant {
    /// Per-stage (first-module stride-2 plus `repeats` stride-1 modules,
    /// output channels) for stages 3..5.
    fn stage_repeats(self) -> [usize; 3] {
        match self {
            // total modules per stage = 1 + repeats
            Variant::Stdc1 => [1, 1, 1],
            Variant::Stdc2 => [3, 4, 2],
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stdc1" | "m" => Ok(Variant::Stdc1),
            "stdc2" | "l" => Ok(Variant::Stdc2),
            other => Err(Error::config(format!(
                "unknown backbone variant '{other}' (expected stdc1|stdc2|m|l)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StdcModuleSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub n_blocks: usize,
    pub stride: usize,
}

/// Channel widths of the blocks inside one STDC module:
/// `[N/2, N/4, ..., N/2^(n-1), N/2^(n-1)]`, summing exactly to N.
pub fn stdc_block_channels(n: usize, n_blocks: usize) -> Result<Vec<usize>> {
    if n_blocks < 2 {
        return Err(Error::config("an STDC module needs at least 2 blocks"));
    }
    let div = 1usize << (n_blocks - 1);
    if n % div != 0 {
        return Err(Error::config(format!(
            "STDC width {} is not divisible by 2^{}",
            n,
            n_blocks - 1
        )));
    }
    let mut chans: Vec<usize> = (1..n_blocks).map(|i| n >> i).collect();
    chans.push(n >> (n_blocks - 1));
    debug_assert_eq!(chans.iter().sum::<usize>(), n);
    Ok(chans)
}

pub struct StdcModule<S: Scalar> {
    pub spec: StdcModuleSpec,
    blocks: Vec<ConvX<S>>,
}

impl<S: Scalar> StdcModule<S> {
    pub fn new(init: &mut ParamInit, spec: StdcModuleSpec) -> Result<Self> {
        if spec.stride != 1 && spec.stride != 2 {
            return Err(Error::config("STDC module stride must be 1 or 2"));
        }
        let chans = stdc_block_channels(spec.out_ch, spec.n_blocks)?;
        let mut blocks = Vec::with_capacity(spec.n_blocks);
        let mut in_ch = spec.in_ch;
        for (i, &c) in chans.iter().enumerate() {
            let block = if i == 0 {
                // first block is 1x1
                ConvX::new(init, in_ch, c, 1, 1, 0, 1)
            } else if i == 1 && spec.stride == 2 {
                // the first 3x3 carries the module stride
                ConvX::new(init, in_ch, c, 3, 2, 1, 1)
            } else {
                ConvX::new(init, in_ch, c, 3, 1, 1, 1)
            };
            blocks.push(block);
            in_ch = c;
        }
        Ok(StdcModule { spec, blocks })
    }

    pub fn forward(&self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        if x.shape().c != self.spec.in_ch {
            return Err(Error::config(format!(
                "STDC module expects {} input channels, got {}",
                self.spec.in_ch,
                x.shape().c
            )));
        }
        let mut outs: Vec<Tensor<S>> = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for block in &self.blocks {
            cur = block.forward(&cur, train)?;
            outs.push(cur.clone());
        }
        if self.spec.stride == 2 {
            // align block 1 to the strided resolution before concatenation
            outs[0] = ops::pool2d(&outs[0], ops::PoolKind::Avg, 3, 2, 1)?;
        }
        ops::concat_channels(&outs)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&format!("{prefix}.block{}", i + 1), out);
        }
    }

    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<Shape> {
        let mut cur = in_shape;
        let mut total_c = 0;
        let mut out_hw = (0, 0);
        for (i, b) in self.blocks.iter().enumerate() {
            cur = b.profile(cur, counts)?;
            if i == 0 && self.spec.stride == 2 {
                // avg pool of block 1's output
                let pooled_h = (cur.h + 2 - 3) / 2 + 1;
                let pooled_w = (cur.w + 2 - 3) / 2 + 1;
                counts.elementwise += (cur.n * cur.c * pooled_h * pooled_w * 9) as u64;
            }
            total_c += cur.c;
            out_hw = (cur.h, cur.w);
        }
        // out_hw follows the last block, which already sits at the module's
        // output resolution for both stride variants
        Ok(Shape::new(in_shape.n, total_c, out_hw.0, out_hw.1))
    }
}

/// Declarative five-stage encoder description.
#[derive(Clone, Copy, Debug)]
pub struct BackboneSpec {
    pub variant: Variant,
}

pub struct StageOutputs<S: Scalar> {
    pub stage3: Tensor<S>,
    pub stage4: Tensor<S>,
    pub stage5: Tensor<S>,
}

pub const STAGE3_CH: usize = 256;
pub const STAGE4_CH: usize = 512;
pub const STAGE5_CH: usize = 1024;

pub struct Backbone<S: Scalar> {
    pub spec: BackboneSpec,
    conv1: ConvX<S>,
    conv2: ConvX<S>,
    stage3: Vec<StdcModule<S>>,
    stage4: Vec<StdcModule<S>>,
    stage5: Vec<StdcModule<S>>,
}

fn build_stage<S: Scalar>(
    init: &mut ParamInit,
    in_ch: usize,
    out_ch: usize,
    repeats: usize,
) -> Result<Vec<StdcModule<S>>> {
    let mut mods = Vec::with_capacity(1 + repeats);
    mods.push(StdcModule::new(
        init,
        StdcModuleSpec {
            in_ch,
            out_ch,
            n_blocks: STDC_N_BLOCKS,
            stride: 2,
        },
    )?);
    for _ in 0..repeats {
        mods.push(StdcModule::new(
            init,
            StdcModuleSpec {
                in_ch: out_ch,
                out_ch,
                n_blocks: STDC_N_BLOCKS,
                stride: 1,
            },
        )?);
    }
    Ok(mods)
}

impl<S: Scalar> Backbone<S> {
    pub fn new(init: &mut ParamInit, spec: BackboneSpec) -> Result<Self> {
        let [r3, r4, r5] = spec.variant.stage_repeats();
        Ok(Backbone {
            spec,
            conv1: ConvX::new(init, 3, 32, 3, 2, 1, 1),
            conv2: ConvX::new(init, 32, 64, 3, 2, 1, 1),
            stage3: build_stage(init, 64, STAGE3_CH, r3)?,
            stage4: build_stage(init, STAGE3_CH, STAGE4_CH, r4)?,
            stage5: build_stage(init, STAGE4_CH, STAGE5_CH, r5)?,
        })
    }

    pub fn forward(&self, image: &Tensor<S>, train: bool) -> Result<StageOutputs<S>> {
        let s = image.shape();
        if s.c != 3 {
            return Err(Error::usage(format!("backbone expects 3-channel input, got {}", s.c)));
        }
        if s.h % 32 != 0 || s.w % 32 != 0 {
            return Err(Error::usage(format!(
                "input dims {}x{} must be divisible by 32",
                s.h, s.w
            )));
        }
        let mut cur = self.conv1.forward(image, train)?;
        cur = self.conv2.forward(&cur, train)?;
        for m in &self.stage3 {
            cur = m.forward(&cur, train)?;
        }
        let stage3 = cur.clone();
        for m in &self.stage4 {
            cur = m.forward(&cur, train)?;
        }
        let stage4 = cur.clone();
        for m in &self.stage5 {
            cur = m.forward(&cur, train)?;
        }
        Ok(StageOutputs {
            stage3,
            stage4,
            stage5: cur,
        })
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.conv1.params(&format!("{prefix}.conv1"), out);
        self.conv2.params(&format!("{prefix}.conv2"), out);
        for (si, stage) in [(3, &self.stage3), (4, &self.stage4), (5, &self.stage5)] {
            for (i, m) in stage.iter().enumerate() {
                m.params(&format!("{prefix}.stage{si}.module{i}"), out);
            }
        }
    }

    /// Shape/compute walk mirroring `forward`; returns the three tap shapes.
    pub fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<[Shape; 3]> {
        let mut cur = self.conv1.profile(in_shape, counts)?;
        cur = self.conv2.profile(cur, counts)?;
        for m in &self.stage3 {
            cur = m.profile(cur, counts)?;
        }
        let s3 = cur;
        for m in &self.stage4 {
            cur = m.profile(cur, counts)?;
        }
        let s4 = cur;
        for m in &self.stage5 {
            cur = m.profile(cur, counts)?;
        }
        Ok([s3, s4, cur])
    }
}
