//! Batch normalization over the (n, h, w) extent of each channel.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{Shape, Tensor};

/// Train mode normalizes with batch statistics and folds them into the running
/// estimates (`running <- (1-momentum)*running + momentum*batch`, biased
/// variance throughout). Infer mode normalizes with the running estimates.
///
/// `running_mean` / `running_var` are plain buffers, mutated in place in train
/// mode; they never receive gradients.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
    eps: f64,
    momentum: f64,
    train: bool,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    let c = xs.c;
    for (t, name) in [
        (gamma, "gamma"),
        (beta, "beta"),
        (running_mean, "running_mean"),
        (running_var, "running_var"),
    ] {
        if t.numel() != c {
            return Err(Error::config(format!(
                "batch_norm {} has {} elements, input has {} channels",
                name,
                t.numel(),
                c
            )));
        }
    }
    let m = xs.n * xs.h * xs.w;
    if train && m == 0 {
        return Err(Error::usage("batch_norm train mode needs a non-empty batch"));
    }

    let data = x.data();
    let hw = xs.h * xs.w;
    let eps_s = S::from_f64c(eps);

    let (mean, var): (Vec<S>, Vec<S>) = if train {
        let mut mean = vec![S::zero(); c];
        let mut var = vec![S::zero(); c];
        let inv_m = S::one() / S::from_f64c(m as f64);
        for ch in 0..c {
            let mut acc = S::zero();
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for v in &data[base..base + hw] {
                    acc += *v;
                }
            }
            let mu = acc * inv_m;
            let mut vacc = S::zero();
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for v in &data[base..base + hw] {
                    let d = *v - mu;
                    vacc += d * d;
                }
            }
            mean[ch] = mu;
            var[ch] = vacc * inv_m;
        }
        // fold into running estimates
        let mom = S::from_f64c(momentum);
        let keep = S::one() - mom;
        {
            let mut rm = running_mean.data_mut();
            let mut rv = running_var.data_mut();
            for ch in 0..c {
                rm[ch] = keep * rm[ch] + mom * mean[ch];
                rv[ch] = keep * rv[ch] + mom * var[ch];
            }
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let g = gamma.data();
    let b = beta.data();
    let mut inv_std = vec![S::zero(); c];
    for ch in 0..c {
        inv_std[ch] = S::one() / (var[ch] + eps_s).sqrt();
    }
    let mut xhat = vec![S::zero(); xs.numel()];
    let mut out = vec![S::zero(); xs.numel()];
    for n in 0..xs.n {
        for ch in 0..c {
            let base = xs.idx(n, ch, 0, 0);
            let (mu, is, gv, bv) = (mean[ch], inv_std[ch], g[ch], b[ch]);
            for i in base..base + hw {
                let xh = (data[i] - mu) * is;
                xhat[i] = xh;
                out[i] = gv * xh + bv;
            }
        }
    }
    drop(data);
    drop(g);
    drop(b);
    Ok(Tensor::from_op(
        xs,
        out,
        Op::BatchNorm {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            train,
            xhat,
            inv_std,
        },
    ))
}

pub(crate) fn bn_backward_input<S: Scalar>(
    gy: &[S],
    xs: Shape,
    gamma: &[S],
    xhat: &[S],
    inv_std: &[S],
    train: bool,
    dx: &mut [S],
) {
    let hw = xs.h * xs.w;
    let m = xs.n * hw;
    for ch in 0..xs.c {
        if train {
            // dx = inv_std/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
            let mut sum_d = S::zero();
            let mut sum_dx = S::zero();
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for i in base..base + hw {
                    let dxh = gy[i] * gamma[ch];
                    sum_d += dxh;
                    sum_dx += dxh * xhat[i];
                }
            }
            let inv_m = S::one() / S::from_f64c(m as f64);
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for i in base..base + hw {
                    let dxh = gy[i] * gamma[ch];
                    dx[i] += inv_std[ch] * (dxh - inv_m * (sum_d + xhat[i] * sum_dx));
                }
            }
        } else {
            let k = gamma[ch] * inv_std[ch];
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for i in base..base + hw {
                    dx[i] += k * gy[i];
                }
            }
        }
    }
}

pub(crate) fn bn_backward_affine<S: Scalar>(
    gy: &[S],
    xs: Shape,
    xhat: &[S],
    dgamma: Option<&mut [S]>,
    dbeta: Option<&mut [S]>,
) {
    let hw = xs.h * xs.w;
    if let Some(dgamma) = dgamma {
        for ch in 0..xs.c {
            let mut acc = S::zero();
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for i in base..base + hw {
                    acc += gy[i] * xhat[i];
                }
            }
            dgamma[ch] += acc;
        }
    }
    if let Some(dbeta) = dbeta {
        for ch in 0..xs.c {
            let mut acc = S::zero();
            for n in 0..xs.n {
                let base = xs.idx(n, ch, 0, 0);
                for i in base..base + hw {
                    acc += gy[i];
                }
            }
            dbeta[ch] += acc;
        }
    }
}
