//! The full segmentation network: STDC encoder, SE-ASPP context head and a
//! two-step CCBAM decoder with segmentation/auxiliary heads.

use crate::attention::Ccbam;
use crate::error::{Error, Result};
use crate::init::ParamInit;
use crate::layers::{Conv2d, ConvX};
use crate::ops;
use crate::profile::{count_params, Counts, NamedParam};
use crate::scalar::Scalar;
use crate::seaspp::{SeAspp, SeAsppConfig};
use crate::stdc::{Backbone, BackboneSpec, Variant, STAGE3_CH, STAGE4_CH, STAGE5_CH};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_DECODER_CH: usize = 256;
pub const DEFAULT_DILATIONS: [usize; 2] = [1, 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub num_classes: usize,
    pub decoder_ch: usize,
    pub dilations: Vec<usize>,
    pub aux_head: bool,
    /// Ablation switch: replace SE-ASPP with a plain 1x1 channel projection.
    pub use_se_aspp: bool,
    /// Ablation switch: replace the CCBAM fusions with elementwise addition.
    pub use_ccbam: bool,
    pub se_on_sum: bool,
}

impl NetworkConfig {
    pub fn new(variant: Variant, num_classes: usize) -> Self {
        NetworkConfig {
            variant,
            num_classes,
            decoder_ch: DEFAULT_DECODER_CH,
            dilations: DEFAULT_DILATIONS.to_vec(),
            aux_head: true,
            use_se_aspp: true,
            use_ccbam: true,
            se_on_sum: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.decoder_ch == 0 || self.decoder_ch % 16 != 0 {
            return Err(Error::config(format!(
                "decoder_ch {} must be a positive multiple of 16",
                self.decoder_ch
            )));
        }
        Ok(())
    }
}

/// Context head on top of stage 5: SE-ASPP or its ablation replacement.
enum Context<S: Scalar> {
    SeAspp(SeAspp<S>),
    Project(ConvX<S>),
}

/// Decoder fusion of upsampled context with a projected skip.
enum Fusion<S: Scalar> {
    Ccbam(Ccbam<S>),
    Add,
}

/// Classifier head: one 3x3 ConvX then a biased 1x1 conv to class logits.
struct SegHead<S: Scalar> {
    mix: ConvX<S>,
    classify: Conv2d<S>,
}

impl<S: Scalar> SegHead<S> {
    fn new(init: &mut ParamInit, in_ch: usize, num_classes: usize) -> Self {
        SegHead {
            mix: ConvX::new(init, in_ch, in_ch, 3, 1, 1, 1),
            classify: Conv2d::new(init, in_ch, num_classes, 1, 1, 0, 1, true),
        }
    }

    fn forward(&self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        let y = self.mix.forward(x, train)?;
        self.classify.forward(&y)
    }

    fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        self.mix.params(&format!("{prefix}.mix"), out);
        self.classify.params(&format!("{prefix}.classify"), out);
    }

    fn profile(&self, in_shape: Shape, counts: &mut Counts) -> Result<Shape> {
        let s = self.mix.profile(in_shape, counts)?;
        self.classify.profile(s, counts)
    }
}

pub struct ModelOutput<S: Scalar> {
    /// Class logits at input resolution, shape (n, num_classes, h, w).
    pub logits: Tensor<S>,
    /// Auxiliary logits at input resolution; present only in train mode when
    /// the auxiliary head is enabled.
    pub aux_logits: Option<Tensor<S>>,
}

/// Per-section compute/parameter breakdown from [`Model::profile`].
#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub backbone: Counts,
    pub decoder: Counts,
    pub params: u64,
    pub out_shape: Shape,
}

impl ProfileReport {
    pub fn total(&self) -> Counts {
        let mut c = self.backbone;
        c.add(self.decoder);
        c
    }
}

pub struct Model<S: Scalar> {
    pub cfg: NetworkConfig,
    backbone: Backbone<S>,
    context: Context<S>,
    proj4: ConvX<S>,
    proj3: ConvX<S>,
    fuse4: Fusion<S>,
    fuse3: Fusion<S>,
    head: SegHead<S>,
    aux: Option<SegHead<S>>,
}

/// Deterministic construction: the same config and seed always produce
/// bit-identical initial weights.
pub fn build_network<S: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<Model<S>> {
    cfg.validate()?;
    let mut init = ParamInit::new(seed);
    let dc = cfg.decoder_ch;
    let backbone = Backbone::new(&mut init, BackboneSpec { variant: cfg.variant })?;
    let context = if cfg.use_se_aspp {
        let mut acfg = SeAsppConfig::new(STAGE5_CH, dc, cfg.dilations.clone());
        acfg.se_on_sum = cfg.se_on_sum;
        Context::SeAspp(SeAspp::new(&mut init, acfg)?)
    } else {
        Context::Project(ConvX::new(&mut init, STAGE5_CH, dc, 1, 1, 0, 1))
    };
    let proj4 = ConvX::new(&mut init, STAGE4_CH, dc, 3, 1, 1, 1);
    let proj3 = ConvX::new(&mut init, STAGE3_CH, dc, 3, 1, 1, 1);
    let mut fusion = || -> Result<Fusion<S>> {
        Ok(if cfg.use_ccbam {
            Fusion::Ccbam(Ccbam::new(&mut init, dc)?)
        } else {
            Fusion::Add
        })
    };
    let fuse4 = fusion()?;
    let fuse3 = fusion()?;
    let head = SegHead::new(&mut init, dc, cfg.num_classes);
    let aux = cfg
        .aux_head
        .then(|| SegHead::new(&mut init, dc, cfg.num_classes));
    Ok(Model {
        cfg: cfg.clone(),
        backbone,
        context,
        proj4,
        proj3,
        fuse4,
        fuse3,
        head,
        aux,
    })
}

impl<S: Scalar> Fusion<S> {
    fn forward(&self, high: &Tensor<S>, low: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Fusion::Ccbam(c) => c.forward(high, low),
            Fusion::Add => ops::add(high, low),
        }
    }

    fn params(&self, prefix: &str, out: &mut Vec<NamedParam<S>>) {
        if let Fusion::Ccbam(c) = self {
            c.params(prefix, out);
        }
    }

    fn profile(&self, shape: Shape, counts: &mut Counts) -> Result<()> {
        match self {
            Fusion::Ccbam(c) => c.profile(shape, counts)?,
            Fusion::Add => counts.elementwise += shape.numel() as u64,
        }
        Ok(())
    }
}

impl<S: Scalar> Model<S> {
    pub fn forward(&self, image: &Tensor<S>, train: bool) -> Result<ModelOutput<S>> {
        let in_shape = image.shape();
        let stages = self.backbone.forward(image, train)?;
        let ctx = match &self.context {
            Context::SeAspp(a) => a.forward(&stages.stage5, train)?,
            Context::Project(p) => p.forward(&stages.stage5, train)?,
        };
        let s4 = stages.stage4.shape();
        let up = ops::bilinear_resize(&ctx, s4.h, s4.w)?;
        let skip4 = self.proj4.forward(&stages.stage4, train)?;
        let fused4 = self.fuse4.forward(&up, &skip4)?;
        let s3 = stages.stage3.shape();
        let up = ops::bilinear_resize(&fused4, s3.h, s3.w)?;
        let skip3 = self.proj3.forward(&stages.stage3, train)?;
        let fused3 = self.fuse3.forward(&up, &skip3)?;
        let logits = self.head.forward(&fused3, train)?;
        let logits = ops::bilinear_resize(&logits, in_shape.h, in_shape.w)?;
        let aux_logits = match (&self.aux, train) {
            (Some(h), true) => {
                let a = h.forward(&fused4, train)?;
                Some(ops::bilinear_resize(&a, in_shape.h, in_shape.w)?)
            }
            _ => None,
        };
        Ok(ModelOutput { logits, aux_logits })
    }

    /// Every tensor in the model state, in a stable order, buffers included.
    pub fn params(&self) -> Vec<NamedParam<S>> {
        let mut out = Vec::new();
        self.backbone.params("backbone", &mut out);
        match &self.context {
            Context::SeAspp(a) => a.params("context.aspp", &mut out),
            Context::Project(p) => p.params("context.proj", &mut out),
        }
        self.proj4.params("decoder.proj4", &mut out);
        self.proj3.params("decoder.proj3", &mut out);
        self.fuse4.params("decoder.fuse4", &mut out);
        self.fuse3.params("decoder.fuse3", &mut out);
        self.head.params("head", &mut out);
        if let Some(a) = &self.aux {
            a.params("aux_head", &mut out);
        }
        out
    }

    pub fn num_params(&self) -> u64 {
        count_params(&self.params())
    }

    /// Analytic inference-path walk (the auxiliary head is not counted; it is
    /// dropped at inference).
    pub fn profile(&self, in_shape: Shape) -> Result<ProfileReport> {
        let mut backbone = Counts::default();
        let [s3, s4, s5] = self.backbone.profile(in_shape, &mut backbone)?;
        let mut dec = Counts::default();
        let ctx = match &self.context {
            Context::SeAspp(a) => a.profile(s5, &mut dec)?,
            Context::Project(p) => p.profile(s5, &mut dec)?,
        };
        let up4 = Shape::new(ctx.n, ctx.c, s4.h, s4.w);
        dec.elementwise += 4 * up4.numel() as u64; // bilinear: 4 taps per output
        self.proj4.profile(s4, &mut dec)?;
        self.fuse4.profile(up4, &mut dec)?;
        let up3 = Shape::new(ctx.n, ctx.c, s3.h, s3.w);
        dec.elementwise += 4 * up3.numel() as u64;
        self.proj3.profile(s3, &mut dec)?;
        self.fuse3.profile(up3, &mut dec)?;
        let logits = self.head.profile(up3, &mut dec)?;
        let out_shape = Shape::new(logits.n, logits.c, in_shape.h, in_shape.w);
        dec.elementwise += 4 * out_shape.numel() as u64;
        Ok(ProfileReport {
            backbone,
            decoder: dec,
            params: self.num_params(),
            out_shape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NetworkConfig {
        let mut cfg = NetworkConfig::new(Variant::Stdc1, 5);
        cfg.decoder_ch = 32;
        cfg
    }

    #[test]
    fn forward_shapes_and_aux_gating() {
        let m = build_network::<f32>(&small_cfg(), 0).unwrap();
        let x = Tensor::zeros(Shape::new(1, 3, 64, 96));
        let out = m.forward(&x, true).unwrap();
        assert_eq!(out.logits.shape(), Shape::new(1, 5, 64, 96));
        assert_eq!(out.aux_logits.unwrap().shape(), Shape::new(1, 5, 64, 96));
        let out = m.forward(&x, false).unwrap();
        assert!(out.aux_logits.is_none());
    }

    #[test]
    fn deterministic_build() {
        let a = build_network::<f32>(&small_cfg(), 7).unwrap();
        let b = build_network::<f32>(&small_cfg(), 7).unwrap();
        let (pa, pb) = (a.params(), b.params());
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.tensor.data().as_slice(), y.tensor.data().as_slice());
        }
    }

    #[test]
    fn seed_changes_weights() {
        let a = build_network::<f32>(&small_cfg(), 0).unwrap();
        let b = build_network::<f32>(&small_cfg(), 1).unwrap();
        let (pa, pb) = (a.params(), b.params());
        let diff = pa
            .iter()
            .zip(pb.iter())
            .any(|(x, y)| x.tensor.data().as_slice() != y.tensor.data().as_slice());
        assert!(diff);
    }

    #[test]
    fn ablations_shrink_model() {
        let full = build_network::<f32>(&small_cfg(), 0).unwrap();
        let mut cfg = small_cfg();
        cfg.use_ccbam = false;
        let no_ccbam = build_network::<f32>(&cfg, 0).unwrap();
        let mut cfg = small_cfg();
        cfg.use_se_aspp = false;
        let no_aspp = build_network::<f32>(&cfg, 0).unwrap();
        assert!(no_ccbam.num_params() < full.num_params());
        assert!(no_aspp.num_params() < full.num_params());
        let x = Tensor::zeros(Shape::new(1, 3, 32, 32));
        assert_eq!(
            no_ccbam.forward(&x, false).unwrap().logits.shape(),
            Shape::new(1, 5, 32, 32)
        );
        assert_eq!(
            no_aspp.forward(&x, false).unwrap().logits.shape(),
            Shape::new(1, 5, 32, 32)
        );
    }

    #[test]
    fn config_rejects_bad_decoder_width() {
        let mut cfg = small_cfg();
        cfg.decoder_ch = 24;
        assert!(build_network::<f32>(&cfg, 0).is_err());
    }
}
