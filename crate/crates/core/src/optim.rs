//! SGD with momentum, weight decay and a polynomial learning-rate schedule.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::profile::{NamedParam, ParamKind};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub power: f64,
    pub momentum: f64,
    /// L2 decay, applied to conv kernels only (never biases or BN affines).
    pub weight_decay: f64,
    pub max_iter: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            base_lr: 0.01,
            min_lr: 1e-4,
            power: 0.9,
            momentum: 0.9,
            weight_decay: 5e-4,
            max_iter: 1000,
        }
    }
}

impl OptimConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be positive"));
        }
        if self.base_lr <= 0.0 || self.min_lr < 0.0 || self.min_lr > self.base_lr {
            return Err(Error::config("need 0 < base_lr and 0 <= min_lr <= base_lr"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Poly schedule `base_lr * (1 - iter/max_iter)^power`, floored at `min_lr`.
/// Iterations at or past `max_iter` stay at the floor.
pub fn poly_lr(cfg: &OptimConfig, iter: usize) -> f64 {
    if iter >= cfg.max_iter {
        return cfg.min_lr;
    }
    let frac = 1.0 - iter as f64 / cfg.max_iter as f64;
    (cfg.base_lr * frac.powf(cfg.power)).max(cfg.min_lr)
}

pub struct Sgd<S: Scalar> {
    pub cfg: OptimConfig,
    velocity: HashMap<u64, Vec<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(cfg: OptimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Sgd {
            cfg,
            velocity: HashMap::new(),
        })
    }

    /// One update over every learnable parameter with a gradient:
    /// `v <- momentum*v + (g + wd*p)`, `p <- p - lr*v`.
    pub fn step(&mut self, params: &[NamedParam<S>], lr: f64) -> Result<()> {
        let lr_s = S::from_f64c(lr);
        let mom = S::from_f64c(self.cfg.momentum);
        let wd = S::from_f64c(self.cfg.weight_decay);
        for p in params {
            if p.kind == ParamKind::Buffer {
                continue;
            }
            let Some(grad) = p.tensor.grad() else { continue };
            let mut data = p.tensor.data_mut();
            let v = self
                .velocity
                .entry(p.tensor.id())
                .or_insert_with(|| vec![S::zero(); data.len()]);
            if v.len() != data.len() {
                return Err(Error::internal("velocity/parameter length mismatch"));
            }
            let decay = p.kind == ParamKind::Weight;
            for i in 0..data.len() {
                let mut g = grad[i];
                if decay {
                    g += wd * data[i];
                }
                v[i] = mom * v[i] + g;
                data[i] -= lr_s * v[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn one_param(v: f32, kind: ParamKind) -> NamedParam<f32> {
        let t = Tensor::param(Shape::new(1, 1, 1, 1), vec![v]).unwrap();
        NamedParam {
            name: "p".into(),
            tensor: t,
            kind,
        }
    }

    #[test]
    fn poly_schedule_endpoints_and_monotone() {
        let cfg = OptimConfig {
            max_iter: 100,
            ..OptimConfig::default()
        };
        assert!((poly_lr(&cfg, 0) - cfg.base_lr).abs() < 1e-15);
        assert_eq!(poly_lr(&cfg, 100), cfg.min_lr);
        assert_eq!(poly_lr(&cfg, 5000), cfg.min_lr);
        let mut prev = f64::INFINITY;
        for it in 0..=100 {
            let lr = poly_lr(&cfg, it);
            assert!(lr <= prev && lr >= cfg.min_lr);
            prev = lr;
        }
    }

    #[test]
    fn momentum_accumulates() {
        let cfg = OptimConfig {
            momentum: 0.5,
            weight_decay: 0.0,
            ..OptimConfig::default()
        };
        let mut opt = Sgd::new(cfg).unwrap();
        let p = one_param(0.0, ParamKind::Weight);
        // constant gradient of 1.0, lr 1.0
        for _ in 0..2 {
            p.tensor.zero_grad();
            p.tensor.accumulate_grad(&[1.0]);
            opt.step(std::slice::from_ref(&p), 1.0).unwrap();
        }
        // step 1: v=1, p=-1; step 2: v=1.5, p=-2.5
        assert!((p.tensor.data()[0] + 2.5).abs() < 1e-6);
    }

    #[test]
    fn decay_only_on_weights() {
        let cfg = OptimConfig {
            momentum: 0.0,
            weight_decay: 0.1,
            ..OptimConfig::default()
        };
        let mut opt = Sgd::new(cfg).unwrap();
        let w = one_param(1.0, ParamKind::Weight);
        let a = one_param(1.0, ParamKind::Affine);
        let (wt, at) = (w.tensor.clone(), a.tensor.clone());
        wt.accumulate_grad(&[0.0]);
        at.accumulate_grad(&[0.0]);
        opt.step(&[w, a], 1.0).unwrap();
        // zero gradient: only the decay term moves the weight
        assert!((wt.data()[0] - 0.9).abs() < 1e-6);
        assert_eq!(at.data()[0], 1.0);
    }

    #[test]
    fn zero_grad_params_untouched() {
        let mut opt = Sgd::new(OptimConfig::default()).unwrap();
        let p = one_param(3.0, ParamKind::Weight);
        opt.step(std::slice::from_ref(&p), 0.1).unwrap();
        assert_eq!(p.tensor.data()[0], 3.0);
    }

    #[test]
    fn config_validation() {
        let bad = OptimConfig {
            momentum: 1.5,
            ..OptimConfig::default()
        };
        assert!(Sgd::<f32>::new(bad).is_err());
        let bad = OptimConfig {
            max_iter: 0,
            ..OptimConfig::default()
        };
        assert!(Sgd::<f32>::new(bad).is_err());
    }
}
