//! Synthetic scene dataset, augmentation and batching.
//!
//! Scenes are procedurally generated: a class-0 background with a handful of
//! rectangles, discs and diagonal stripes. Every class has a fixed color, so
//! the segmentation task is learnable from color plus shape alone; Gaussian
//! noise on the image (never the labels) keeps it from being trivial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSpec {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub noise_std: f64,
    /// How many shape kinds to draw from: 1 = rectangles, 2 = +discs,
    /// 3 = +stripes.
    pub shape_kinds: usize,
    /// Snap rectangle corners and extents to this grid (1 = no snapping).
    pub align: usize,
    /// Relabel pixels within this many pixels of a class edge as 255 (void),
    /// the usual benchmark treatment of ambiguous boundaries. 0 disables it.
    pub boundary_ignore: usize,
}

impl SceneSpec {
    pub fn new(num_classes: usize, height: usize, width: usize) -> Self {
        SceneSpec {
            num_classes,
            height,
            width,
            min_shapes: 3,
            max_shapes: 8,
            noise_std: 0.03,
            shape_kinds: 3,
            align: 1,
            boundary_ignore: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("scenes need at least 2 classes"));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::config("scene dims must be at least 8x8"));
        }
        if self.min_shapes > self.max_shapes {
            return Err(Error::config("min_shapes must not exceed max_shapes"));
        }
        if !(1..=3).contains(&self.shape_kinds) {
            return Err(Error::config("shape_kinds must be 1, 2 or 3"));
        }
        if self.align == 0 || self.align * 4 > self.height.min(self.width) {
            return Err(Error::config("align must be positive and at most dims/4"));
        }
        Ok(())
    }
}

pub struct Sample<S: Scalar> {
    /// RGB image in [0,1], shape (1, 3, h, w).
    pub image: Tensor<S>,
    pub labels: LabelMap,
}

/// Fixed RGB color for a class, in [0,1]. Class 0 is a dark neutral gray.
pub fn class_color(class: usize) -> [f64; 3] {
    if class == 0 {
        return [0.18, 0.18, 0.20];
    }
    let c = class as u32;
    [
        ((c * 67 + 40) % 211) as f64 / 210.0,
        ((c * 97 + 80) % 211) as f64 / 210.0,
        ((c * 151 + 120) % 211) as f64 / 210.0,
    ]
}

/// Marks every pixel within `radius` (4-connected) of a class transition as
/// 255.
fn void_class_edges(labels: &mut [i32], h: usize, w: usize, radius: usize) {
    let mut band = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if x + 1 < w && labels[y * w + x + 1] != l {
                band[y * w + x] = true;
                band[y * w + x + 1] = true;
            }
            if y + 1 < h && labels[(y + 1) * w + x] != l {
                band[y * w + x] = true;
                band[(y + 1) * w + x] = true;
            }
        }
    }
    for _ in 1..radius {
        let prev = band.clone();
        for y in 0..h {
            for x in 0..w {
                if prev[y * w + x] {
                    continue;
                }
                let near = (x > 0 && prev[y * w + x - 1])
                    || (x + 1 < w && prev[y * w + x + 1])
                    || (y > 0 && prev[(y - 1) * w + x])
                    || (y + 1 < h && prev[(y + 1) * w + x]);
                band[y * w + x] = near;
            }
        }
    }
    for (l, b) in labels.iter_mut().zip(band) {
        if b {
            *l = 255;
        }
    }
}

/// Deterministic scene `index` of the stream named by `seed`.
pub fn generate_scene<S: Scalar>(spec: &SceneSpec, seed: u64, index: u64) -> Result<Sample<S>> {
    generate_scene_with_noise(spec, seed, index, seed)
}

/// Like [`generate_scene`] but with the pixel-noise stream seeded separately,
/// so the same geometry can be rendered under fresh noise.
pub fn generate_scene_with_noise<S: Scalar>(
    spec: &SceneSpec,
    seed: u64,
    index: u64,
    noise_seed: u64,
) -> Result<Sample<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E3779B97F4A7C15));
    let (h, w) = (spec.height, spec.width);
    let mut labels = vec![0i32; h * w];
    let mut canvas = vec![[0.0f64; 3]; h * w];
    for px in canvas.iter_mut() {
        *px = class_color(0);
    }
    let n_shapes = rng.gen_range(spec.min_shapes..=spec.max_shapes);
    for _ in 0..n_shapes {
        let class = rng.gen_range(1..spec.num_classes);
        let color = class_color(class);
        let kind = rng.gen_range(0..spec.shape_kinds as u32);
        match kind {
            0 => {
                // rectangle, optionally snapped to the alignment grid
                let a = spec.align;
                let snap = |v: usize| (v / a * a).max(a);
                let rh = snap(rng.gen_range(h / 8..=h / 2));
                let rw = snap(rng.gen_range(w / 8..=w / 2));
                let y0 = rng.gen_range(0..h - rh + 1) / a * a;
                let x0 = rng.gen_range(0..w - rw + 1) / a * a;
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        labels[y * w + x] = class as i32;
                        canvas[y * w + x] = color;
                    }
                }
            }
            1 => {
                // disc
                let r = rng.gen_range(h.min(w) / 10..=h.min(w) / 4).max(2);
                let cy = rng.gen_range(0..h) as i64;
                let cx = rng.gen_range(0..w) as i64;
                let r2 = (r * r) as i64;
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        if (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2 {
                            labels[(y as usize) * w + x as usize] = class as i32;
                            canvas[(y as usize) * w + x as usize] = color;
                        }
                    }
                }
            }
            _ => {
                // diagonal stripe of constant y + x band
                let thick = rng.gen_range(2..=h / 4).max(2);
                let offset = rng.gen_range(0..h + w);
                for y in 0..h {
                    for x in 0..w {
                        let d = y + x;
                        if d >= offset && d < offset + thick {
                            labels[y * w + x] = class as i32;
                            canvas[y * w + x] = color;
                        }
                    }
                }
            }
        }
    }
    if spec.boundary_ignore > 0 {
        void_class_edges(&mut labels, h, w, spec.boundary_ignore);
    }
    let noise = Normal::new(0.0f64, spec.noise_std.max(1e-12))
        .map_err(|e| Error::internal(format!("noise distribution: {e}")))?;
    let mut nrng = ChaCha8Rng::seed_from_u64(noise_seed ^ index.wrapping_mul(0xD1B54A32D192ED03));
    let mut image = vec![S::zero(); 3 * h * w];
    for ch in 0..3 {
        for i in 0..h * w {
            let v = (canvas[i][ch] + noise.sample(&mut nrng)).clamp(0.0, 1.0);
            image[ch * h * w + i] = S::from_f64c(v);
        }
    }
    Ok(Sample {
        image: Tensor::from_vec(Shape::new(1, 3, h, w), image)?,
        labels: LabelMap::new(1, h, w, labels)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub crop_h: usize,
    pub crop_w: usize,
    pub hflip_prob: f64,
    pub ignore_index: i32,
}

impl AugmentConfig {
    pub fn new(crop_h: usize, crop_w: usize) -> Self {
        AugmentConfig {
            scale_min: 0.75,
            scale_max: 1.5,
            crop_h,
            crop_w,
            hflip_prob: 0.5,
            ignore_index: 255,
        }
    }
}

fn nearest_resize_labels(labels: &LabelMap, out_h: usize, out_w: usize) -> LabelMap {
    let mut out = Vec::with_capacity(labels.n * out_h * out_w);
    for n in 0..labels.n {
        for y in 0..out_h {
            let sy = ((y as f64 + 0.5) * labels.h as f64 / out_h as f64) as usize;
            let sy = sy.min(labels.h - 1);
            for x in 0..out_w {
                let sx = ((x as f64 + 0.5) * labels.w as f64 / out_w as f64) as usize;
                out.push(labels.get(n, sy, sx.min(labels.w - 1)));
            }
        }
    }
    LabelMap::new(labels.n, out_h, out_w, out).expect("consistent by construction")
}

/// Random scale, crop (zero-padded image, ignore-padded labels) and
/// horizontal flip. Image interpolation is bilinear; labels use nearest.
pub fn augment<S: Scalar>(
    sample: &Sample<S>,
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Sample<S>> {
    if cfg.scale_min <= 0.0 || cfg.scale_min > cfg.scale_max {
        return Err(Error::config("need 0 < scale_min <= scale_max"));
    }
    let s = sample.image.shape();
    let factor = rng.gen_range(cfg.scale_min..=cfg.scale_max);
    let sh = ((s.h as f64 * factor).round() as usize).max(1);
    let sw = ((s.w as f64 * factor).round() as usize).max(1);
    let image = ops::bilinear_resize(&sample.image.detach(), sh, sw)?;
    let labels = nearest_resize_labels(&sample.labels, sh, sw);

    // crop window in padded coordinates: padding shows up as negative offsets
    let oy_max = sh.max(cfg.crop_h) - cfg.crop_h;
    let ox_max = sw.max(cfg.crop_w) - cfg.crop_w;
    let oy = rng.gen_range(0..=oy_max) as i64 - ((cfg.crop_h.max(sh) - sh) / 2) as i64;
    let ox = rng.gen_range(0..=ox_max) as i64 - ((cfg.crop_w.max(sw) - sw) / 2) as i64;
    let flip = rng.gen_bool(cfg.hflip_prob.clamp(0.0, 1.0));

    let src = image.data();
    let ss = image.shape();
    let mut out_img = vec![S::zero(); 3 * cfg.crop_h * cfg.crop_w];
    let mut out_lab = vec![cfg.ignore_index; cfg.crop_h * cfg.crop_w];
    for y in 0..cfg.crop_h {
        let sy = y as i64 + oy;
        if sy < 0 || sy >= sh as i64 {
            continue;
        }
        for x in 0..cfg.crop_w {
            let dx = if flip { cfg.crop_w - 1 - x } else { x };
            let sx = x as i64 + ox;
            if sx < 0 || sx >= sw as i64 {
                continue;
            }
            let (sy, sx) = (sy as usize, sx as usize);
            for ch in 0..3 {
                out_img[(ch * cfg.crop_h + y) * cfg.crop_w + dx] = src[ss.idx(0, ch, sy, sx)];
            }
            out_lab[y * cfg.crop_w + dx] = labels.get(0, sy, sx);
        }
    }
    Ok(Sample {
        image: Tensor::from_vec(Shape::new(1, 3, cfg.crop_h, cfg.crop_w), out_img)?,
        labels: LabelMap::new(1, cfg.crop_h, cfg.crop_w, out_lab)?,
    })
}

/// Stack single-sample images/labels into one batch. All samples must share
/// dimensions.
pub fn collate<S: Scalar>(samples: &[Sample<S>]) -> Result<Sample<S>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::usage("cannot collate an empty batch"))?;
    let s = first.image.shape();
    let mut image = Vec::with_capacity(samples.len() * s.numel());
    let mut labels = Vec::with_capacity(samples.len() * s.h * s.w);
    for sm in samples {
        if sm.image.shape() != s {
            return Err(Error::usage("batch samples disagree on shape"));
        }
        image.extend_from_slice(&sm.image.data());
        labels.extend_from_slice(&sm.labels.data);
    }
    Ok(Sample {
        image: Tensor::from_vec(Shape::new(samples.len(), s.c, s.h, s.w), image)?,
        labels: LabelMap::new(samples.len(), s.h, s.w, labels)?,
    })
}

/// Index batches of size `batch` over `n` samples, dropping the remainder.
pub fn batch_indices(n: usize, batch: usize) -> Result<Vec<Vec<u64>>> {
    if batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    Ok((0..n / batch)
        .map(|b| ((b * batch) as u64..((b + 1) * batch) as u64).collect())
        .collect())
}
