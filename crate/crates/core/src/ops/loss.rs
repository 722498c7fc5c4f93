//! Softmax cross-entropy / focal loss over pixel label maps.
//!
//! One fused op covers both: with `gamma = 0` the focal modulation factor
//! `(1 - p_t)^gamma` is identically 1 and the op reduces to plain softmax
//! cross-entropy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{LabelMap, Shape, Tensor};

/// Mean over non-ignored pixels of `-(1 - p_t)^gamma * log(p_t)` with `p_t`
/// the softmax probability of the target class. Returns the scalar loss and
/// the number of contributing pixels (0 means every pixel was ignored and the
/// loss is defined as 0).
pub fn softmax_focal_ce<S: Scalar>(
    logits: &Tensor<S>,
    target: &LabelMap,
    gamma: f64,
    ignore_index: i32,
) -> Result<(Tensor<S>, usize)> {
    let ls = logits.shape();
    if gamma < 0.0 {
        return Err(Error::config("focal gamma must be non-negative"));
    }
    if (target.n, target.h, target.w) != (ls.n, ls.h, ls.w) {
        return Err(Error::usage(format!(
            "target ({},{},{}) does not match logits {}",
            target.n, target.h, target.w, ls
        )));
    }
    let k = ls.c;
    let data = logits.data();
    let hw = ls.h * ls.w;
    // log-softmax probabilities, saved for backward
    let mut probs = vec![S::zero(); ls.numel()];
    let mut valid = 0usize;
    let mut acc = 0.0f64;
    let g = S::from_f64c(gamma);
    for n in 0..ls.n {
        for h in 0..ls.h {
            for w in 0..ls.w {
                let t = target.get(n, h, w);
                let pix = h * ls.w + w;
                // softmax over classes (always saved; backward needs it)
                let mut maxv = S::neg_infinity();
                for c in 0..k {
                    let v = data[(n * k + c) * hw + pix];
                    if v > maxv {
                        maxv = v;
                    }
                }
                let mut denom = S::zero();
                for c in 0..k {
                    denom += (data[(n * k + c) * hw + pix] - maxv).exp();
                }
                let log_denom = denom.ln();
                for c in 0..k {
                    let logp = data[(n * k + c) * hw + pix] - maxv - log_denom;
                    probs[(n * k + c) * hw + pix] = logp.exp();
                }
                if t == ignore_index {
                    continue;
                }
                if t < 0 || t as usize >= k {
                    return Err(Error::usage(format!(
                        "target label {} out of range for {} classes",
                        t, k
                    )));
                }
                let logp_t =
                    (data[(n * k + t as usize) * hw + pix] - maxv - log_denom).to_f64c();
                let p_t = logp_t.exp();
                let modulation = if gamma == 0.0 {
                    1.0
                } else {
                    (1.0 - p_t).max(0.0).powf(gamma)
                };
                acc += -modulation * logp_t;
                valid += 1;
            }
        }
    }
    drop(data);
    let loss = if valid == 0 { 0.0 } else { acc / valid as f64 };
    let t = Tensor::from_op(
        Shape::new(1, 1, 1, 1),
        vec![S::from_f64c(loss)],
        Op::FocalCe {
            logits: logits.clone(),
            target: target.clone(),
            gamma: g,
            ignore_index,
            probs,
            valid,
        },
    );
    Ok((t, valid))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn focal_ce_backward<S: Scalar>(
    gy: S,
    ls: Shape,
    target: &LabelMap,
    gamma: S,
    ignore_index: i32,
    probs: &[S],
    valid: usize,
    dx: &mut [S],
) {
    if valid == 0 {
        return;
    }
    let k = ls.c;
    let hw = ls.h * ls.w;
    let scale = gy / S::from_f64c(valid as f64);
    let gamma_f = gamma.to_f64c();
    for n in 0..ls.n {
        for h in 0..ls.h {
            for w in 0..ls.w {
                let t = target.get(n, h, w);
                if t == ignore_index {
                    continue;
                }
                let pix = h * ls.w + w;
                let t = t as usize;
                let p_t = probs[(n * k + t) * hw + pix].to_f64c();
                let s = (1.0 - p_t).max(0.0);
                // d loss / d logp_t, with loss = -(1-p)^g * log(p), p = e^u
                let factor = if gamma_f == 0.0 {
                    -1.0
                } else {
                    let a = if s < 1e-300 {
                        0.0
                    } else {
                        gamma_f * s.powf(gamma_f - 1.0) * p_t * p_t.max(1e-300).ln()
                    };
                    a - s.powf(gamma_f)
                };
                let factor = S::from_f64c(factor) * scale;
                for c in 0..k {
                    let p_c = probs[(n * k + c) * hw + pix];
                    let indicator = if c == t { S::one() } else { S::zero() };
                    dx[(n * k + c) * hw + pix] += factor * (indicator - p_c);
                }
            }
        }
    }
}
