//! Training objective: a weighted blend of cross-entropy and focal loss, with
//! an optional auxiliary-head term.

use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Tensor};

pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_AUX_WEIGHT: f64 = 0.4;
pub const IGNORE_INDEX: i32 = 255;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight on cross-entropy; the focal term gets `1 - alpha`.
    pub alpha: f64,
    /// Focal focusing exponent.
    pub gamma: f64,
    pub ignore_index: i32,
    pub aux_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: DEFAULT_ALPHA,
            gamma: DEFAULT_GAMMA,
            ignore_index: IGNORE_INDEX,
            aux_weight: DEFAULT_AUX_WEIGHT,
        }
    }
}

/// Scalar loss plus diagnostics for logging.
pub struct LossOutput<S: Scalar> {
    pub loss: Tensor<S>,
    /// Number of non-ignored pixels in the main term.
    pub valid_pixels: usize,
    /// True if every pixel was ignored (the loss is defined as 0 then).
    pub all_ignored: bool,
}

pub fn cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    target: &LabelMap,
    ignore_index: i32,
) -> Result<(Tensor<S>, usize)> {
    ops::softmax_focal_ce(logits, target, 0.0, ignore_index)
}

pub fn focal_loss<S: Scalar>(
    logits: &Tensor<S>,
    target: &LabelMap,
    gamma: f64,
    ignore_index: i32,
) -> Result<(Tensor<S>, usize)> {
    ops::softmax_focal_ce(logits, target, gamma, ignore_index)
}

/// `alpha * CE + (1 - alpha) * FL` over one set of logits.
fn blend<S: Scalar>(
    logits: &Tensor<S>,
    target: &LabelMap,
    cfg: &LossConfig,
) -> Result<(Tensor<S>, usize)> {
    let (ce, valid) = cross_entropy(logits, target, cfg.ignore_index)?;
    let (fl, _) = focal_loss(logits, target, cfg.gamma, cfg.ignore_index)?;
    let loss = ops::axpby(&ce, &fl, S::from_f64c(cfg.alpha), S::from_f64c(1.0 - cfg.alpha))?;
    Ok((loss, valid))
}

/// Full training objective: the blended main loss, plus `aux_weight` times the
/// same blend on the auxiliary logits when present.
pub fn composite_loss<S: Scalar>(
    logits: &Tensor<S>,
    aux_logits: Option<&Tensor<S>>,
    target: &LabelMap,
    cfg: &LossConfig,
) -> Result<LossOutput<S>> {
    let (main, valid) = blend(logits, target, cfg)?;
    let loss = match aux_logits {
        Some(aux) => {
            let (aux_loss, _) = blend(aux, target, cfg)?;
            ops::axpby(&main, &aux_loss, S::one(), S::from_f64c(cfg.aux_weight))?
        }
        None => main,
    };
    Ok(LossOutput {
        loss,
        valid_pixels: valid,
        all_ignored: valid == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn logits_and_target() -> (Tensor<f64>, LabelMap) {
        let shape = Shape::new(1, 3, 2, 2);
        let data: Vec<f64> = (0..shape.numel()).map(|i| (i as f64 * 0.37).sin()).collect();
        let logits = Tensor::param(shape, data).unwrap();
        let target = LabelMap::new(1, 2, 2, vec![0, 1, 2, 255]).unwrap();
        (logits, target)
    }

    #[test]
    fn alpha_one_is_pure_cross_entropy() {
        let (logits, target) = logits_and_target();
        let cfg = LossConfig {
            alpha: 1.0,
            ..LossConfig::default()
        };
        let out = composite_loss(&logits, None, &target, &cfg).unwrap();
        let (ce, _) = cross_entropy(&logits, &target, cfg.ignore_index).unwrap();
        assert!((out.loss.item() - ce.item()).abs() < 1e-12);
    }

    #[test]
    fn focal_no_greater_than_ce() {
        // (1-p)^gamma <= 1, so the focal term can only shrink each pixel loss
        let (logits, target) = logits_and_target();
        let (ce, _) = cross_entropy(&logits, &target, 255).unwrap();
        let (fl, _) = focal_loss(&logits, &target, 2.0, 255).unwrap();
        assert!(fl.item() <= ce.item());
        assert!(fl.item() > 0.0);
    }

    #[test]
    fn aux_term_adds_weighted_loss() {
        let (logits, target) = logits_and_target();
        let cfg = LossConfig::default();
        let solo = composite_loss(&logits, None, &target, &cfg).unwrap();
        let with_aux = composite_loss(&logits, Some(&logits), &target, &cfg).unwrap();
        let expected = solo.loss.item() * (1.0 + cfg.aux_weight);
        assert!((with_aux.loss.item() - expected).abs() < 1e-12);
    }

    #[test]
    fn all_ignored_flags_and_zeroes() {
        let (logits, _) = logits_and_target();
        let target = LabelMap::filled(1, 2, 2, 255);
        let out = composite_loss(&logits, None, &target, &LossConfig::default()).unwrap();
        assert!(out.all_ignored);
        assert_eq!(out.loss.item(), 0.0);
    }

    #[test]
    fn composite_backward_flows() {
        let (logits, target) = logits_and_target();
        let out = composite_loss(&logits, None, &target, &LossConfig::default()).unwrap();
        out.loss.backward().unwrap();
        let g = logits.grad().unwrap();
        assert!(g.iter().any(|&v| v != 0.0));
        // softmax gradients per pixel sum to ~0
        let s: f64 = g.iter().sum();
        assert!(s.abs() < 1e-9);
    }
}
