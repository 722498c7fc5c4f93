//! Deterministic training and evaluation loops over synthetic scenes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rand::Rng;

use crate::config::RunConfig;
use crate::data::{augment, batch_indices, collate, generate_scene, AugmentConfig, SceneSpec};
use crate::error::{Error, Result};
use crate::gradcheck::{finite_diff_grad_sampled, rel_err, GradCheckReport};
use crate::metrics::{argmax_predictions, ConfusionMatrix, MiouReport};
use crate::network::{build_network, Model};
use crate::objective::composite_loss;
use crate::optim::{poly_lr, Sgd};
use crate::profile::ParamKind;
use crate::scalar::Scalar;

/// Seed offset separating the validation scene stream from training scenes.
const VAL_STREAM_OFFSET: u64 = 0x5EED_0001;

#[derive(Clone, Copy, Debug)]
pub struct TrainLogEntry {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub valid_pixels: usize,
}

pub struct TrainReport {
    pub log: Vec<TrainLogEntry>,
    /// (iteration, mIoU) of each periodic validation pass.
    pub val: Vec<(usize, f64)>,
    pub final_miou: MiouReport,
}

/// The scene generator settings implied by a run config.
pub fn scene_spec(cfg: &RunConfig) -> SceneSpec {
    let mut spec = SceneSpec::new(cfg.num_classes, cfg.height, cfg.width);
    spec.noise_std = cfg.noise_std;
    spec.shape_kinds = cfg.shape_kinds;
    spec.align = cfg.align;
    spec.min_shapes = cfg.min_shapes;
    spec.max_shapes = cfg.max_shapes;
    spec.boundary_ignore = cfg.boundary_ignore;
    spec
}

fn augment_config(cfg: &RunConfig) -> AugmentConfig {
    AugmentConfig {
        scale_min: cfg.scale_min,
        scale_max: cfg.scale_max,
        crop_h: cfg.crop_h,
        crop_w: cfg.crop_w,
        hflip_prob: cfg.hflip_prob,
        ignore_index: cfg.ignore_index,
    }
}

fn check_dims(cfg: &RunConfig) -> Result<()> {
    for (name, v) in [
        ("height", cfg.height),
        ("width", cfg.width),
        ("crop_h", cfg.crop_h),
        ("crop_w", cfg.crop_w),
    ] {
        if v % 32 != 0 {
            return Err(Error::config(format!("{name}={v} must be divisible by 32")));
        }
    }
    if cfg.batch_size == 0 || cfg.train_size == 0 {
        return Err(Error::config("batch_size and train_size must be positive"));
    }
    Ok(())
}

/// mIoU over `count` full-resolution scenes of the `scene_seed` stream, with
/// pixel noise drawn from `noise_seed`. No augmentation.
pub fn evaluate_scenes<S: Scalar>(
    model: &Model<S>,
    cfg: &RunConfig,
    scene_seed: u64,
    noise_seed: u64,
    count: usize,
) -> Result<MiouReport> {
    let spec = scene_spec(cfg);
    let mut cm = ConfusionMatrix::new(cfg.num_classes)?;
    for i in 0..count {
        let sample =
            crate::data::generate_scene_with_noise::<S>(&spec, scene_seed, i as u64, noise_seed)?;
        let out = model.forward(&sample.image, false)?;
        let pred = argmax_predictions(&out.logits);
        cm.accumulate(&pred, &sample.labels, cfg.ignore_index)?;
    }
    Ok(cm.miou())
}

/// Run validation: a scene stream disjoint from training.
pub fn evaluate<S: Scalar>(model: &Model<S>, cfg: &RunConfig) -> Result<MiouReport> {
    let seed = cfg.seed.wrapping_add(VAL_STREAM_OFFSET);
    evaluate_scenes(model, cfg, seed, seed, cfg.val_size)
}

/// Full deterministic training run. `sink` receives one formatted line per
/// log/validation event.
pub fn train<S: Scalar>(cfg: &RunConfig, mut sink: impl FnMut(&str)) -> Result<(Model<S>, TrainReport)> {
    check_dims(cfg)?;
    let model = build_network::<S>(&cfg.network_config(), cfg.seed)?;
    let params = model.params();
    let mut opt = Sgd::new(cfg.optim_config())?;
    let loss_cfg = cfg.loss_config();
    let spec = scene_spec(cfg);
    let aug_cfg = augment_config(cfg);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut report = TrainReport {
        log: Vec::new(),
        val: Vec::new(),
        final_miou: MiouReport {
            miou: 0.0,
            per_class: Vec::new(),
            classes_seen: 0,
            empty: true,
        },
    };
    // fixed cyclic pass over the training stream, batch-sized strides
    let batches_per_epoch = batch_indices(cfg.train_size, cfg.batch_size)?.len().max(1);
    for iter in 0..cfg.max_iter {
        let mut samples = Vec::with_capacity(cfg.batch_size);
        for j in 0..cfg.batch_size {
            let idx = ((iter % batches_per_epoch) * cfg.batch_size + j) as u64;
            let scene = generate_scene::<S>(&spec, cfg.seed, idx)?;
            samples.push(augment(&scene, &aug_cfg, &mut aug_rng)?);
        }
        let batch = collate(&samples)?;
        for p in &params {
            p.tensor.zero_grad();
        }
        let out = model.forward(&batch.image, true)?;
        let loss = composite_loss(&out.logits, out.aux_logits.as_ref(), &batch.labels, &loss_cfg)?;
        if loss.all_ignored {
            sink(&format!("iter {iter}: every pixel ignored, skipping step"));
            continue;
        }
        loss.loss.backward()?;
        let lr = poly_lr(&opt.cfg, iter);
        opt.step(&params, lr)?;
        let entry = TrainLogEntry {
            iter,
            lr,
            loss: loss.loss.item().to_f64c(),
            valid_pixels: loss.valid_pixels,
        };
        if iter % cfg.log_every.max(1) == 0 || iter + 1 == cfg.max_iter {
            sink(&format!(
                "iter {:>5}  lr {:.6}  loss {:.5}  valid_px {}",
                entry.iter, entry.lr, entry.loss, entry.valid_pixels
            ));
        }
        report.log.push(entry);
        if cfg.val_every > 0 && (iter + 1) % cfg.val_every == 0 {
            let m = evaluate(&model, cfg)?;
            sink(&format!("iter {:>5}  val mIoU {:.4} ({} classes)", iter, m.miou, m.classes_seen));
            report.val.push((iter, m.miou));
        }
    }
    report.final_miou = evaluate(&model, cfg)?;
    sink(&format!(
        "final val mIoU {:.4} over {} classes",
        report.final_miou.miou, report.final_miou.classes_seen
    ));
    Ok((model, report))
}

/// End-to-end f64 gradient check of the whole training objective: one
/// synthetic scene, `samples` randomly chosen parameter coordinates, central
/// differences against one reverse pass.
pub fn network_gradcheck(cfg: &RunConfig, samples: usize, eps: f64) -> Result<GradCheckReport> {
    check_dims(cfg)?;
    let model = build_network::<f64>(&cfg.network_config(), cfg.seed)?;
    let spec = scene_spec(cfg);
    let scene = generate_scene::<f64>(&spec, cfg.seed, 0)?;
    let loss_cfg = cfg.loss_config();
    let params: Vec<_> = model
        .params()
        .into_iter()
        .filter(|p| p.kind != ParamKind::Buffer)
        .collect();
    let forward = |image: &crate::tensor::Tensor<f64>| -> Result<crate::tensor::Tensor<f64>> {
        let out = model.forward(image, true)?;
        Ok(composite_loss(&out.logits, out.aux_logits.as_ref(), &scene.labels, &loss_cfg)?.loss)
    };
    for p in &params {
        p.tensor.zero_grad();
    }
    forward(&scene.image)?.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6AD_C4EC);
    let mut report = GradCheckReport {
        checked: 0,
        worst_rel_err: 0.0,
        worst_index: 0,
    };
    for _ in 0..samples {
        let p = &params[rng.gen_range(0..params.len())];
        let idx = rng.gen_range(0..p.tensor.numel());
        let analytic = p.tensor.grad().map(|g| g[idx]).unwrap_or(0.0);
        let mut f = |_: &crate::tensor::Tensor<f64>| forward(&scene.image).expect("forward").item();
        // a step that straddles a relu/max kink downstream skews the secant;
        // shrink until the estimate stabilizes (a wrong gradient never does)
        let mut e = f64::INFINITY;
        for k in 0..4 {
            let step = eps / 8f64.powi(k);
            let numeric = finite_diff_grad_sampled(&mut f, &p.tensor, step, &[idx])[0].1;
            e = e.min(rel_err(analytic, numeric, 1e-3));
            if e <= 1e-6 {
                break;
            }
        }
        report.checked += 1;
        if e > report.worst_rel_err {
            report.worst_rel_err = e;
            report.worst_index = idx;
        }
    }
    Ok(report)
}
