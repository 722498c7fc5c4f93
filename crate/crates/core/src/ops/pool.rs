//! Windowed, global and channel-axis pooling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{Shape, Tensor};

use super::conv::out_extent;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Windowed pooling. Average pooling divides by the number of in-bounds
/// elements in each window, excluding padding.
pub fn pool2d<S: Scalar>(
    x: &Tensor<S>,
    kind: PoolKind,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    if k == 0 || stride == 0 {
        return Err(Error::config("pool2d kernel and stride must be positive"));
    }
    if padding >= k {
        return Err(Error::config(format!(
            "pool2d padding {} must be smaller than kernel {}",
            padding, k
        )));
    }
    let oh = out_extent(xs.h, k, stride, padding, 1);
    let ow = out_extent(xs.w, k, stride, padding, 1);
    let (oh, ow) = match (oh, ow) {
        (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => (oh, ow),
        _ => {
            return Err(Error::config(format!(
                "pool2d window {}x{} does not fit input {}x{} with padding {}",
                k, k, xs.h, xs.w, padding
            )))
        }
    };
    let os = Shape::new(xs.n, xs.c, oh, ow);
    let data = x.data();
    let mut out = vec![S::zero(); os.numel()];
    let mut argmax = if kind == PoolKind::Max {
        Some(vec![0usize; os.numel()])
    } else {
        None
    };
    for n in 0..xs.n {
        for c in 0..xs.c {
            let x_base = xs.idx(n, c, 0, 0);
            for o_h in 0..oh {
                for o_w in 0..ow {
                    let h_lo = (o_h * stride).saturating_sub(padding);
                    let h_hi = (o_h * stride + k).saturating_sub(padding).min(xs.h);
                    let w_lo = (o_w * stride).saturating_sub(padding);
                    let w_hi = (o_w * stride + k).saturating_sub(padding).min(xs.w);
                    let oi = os.idx(n, c, o_h, o_w);
                    match kind {
                        PoolKind::Avg => {
                            let mut acc = S::zero();
                            for ih in h_lo..h_hi {
                                for iw in w_lo..w_hi {
                                    acc += data[x_base + ih * xs.w + iw];
                                }
                            }
                            let count = (h_hi - h_lo) * (w_hi - w_lo);
                            out[oi] = acc / S::from_f64c(count as f64);
                        }
                        PoolKind::Max => {
                            let mut best = S::neg_infinity();
                            let mut best_i = x_base + h_lo * xs.w + w_lo;
                            for ih in h_lo..h_hi {
                                for iw in w_lo..w_hi {
                                    let i = x_base + ih * xs.w + iw;
                                    if data[i] > best {
                                        best = data[i];
                                        best_i = i;
                                    }
                                }
                            }
                            out[oi] = best;
                            argmax.as_mut().unwrap()[oi] = best_i;
                        }
                    }
                }
            }
        }
    }
    drop(data);
    Ok(Tensor::from_op(
        os,
        out,
        Op::Pool2d {
            x: x.clone(),
            kind,
            k,
            stride,
            padding,
            argmax,
        },
    ))
}

/// Pool the full spatial extent down to (n, c, 1, 1).
pub fn global_pool<S: Scalar>(x: &Tensor<S>, kind: PoolKind) -> Result<Tensor<S>> {
    let xs = x.shape();
    if xs.h == 0 || xs.w == 0 {
        return Err(Error::config("global_pool requires non-empty spatial dims"));
    }
    let os = Shape::new(xs.n, xs.c, 1, 1);
    let data = x.data();
    let hw = xs.h * xs.w;
    let mut out = vec![S::zero(); os.numel()];
    let mut argmax = if kind == PoolKind::Max {
        Some(vec![0usize; os.numel()])
    } else {
        None
    };
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = xs.idx(n, c, 0, 0);
            let oi = os.idx(n, c, 0, 0);
            match kind {
                PoolKind::Avg => {
                    let mut acc = S::zero();
                    for v in &data[base..base + hw] {
                        acc += *v;
                    }
                    out[oi] = acc / S::from_f64c(hw as f64);
                }
                PoolKind::Max => {
                    let mut best = S::neg_infinity();
                    let mut best_i = base;
                    for (off, v) in data[base..base + hw].iter().enumerate() {
                        if *v > best {
                            best = *v;
                            best_i = base + off;
                        }
                    }
                    out[oi] = best;
                    argmax.as_mut().unwrap()[oi] = best_i;
                }
            }
        }
    }
    drop(data);
    Ok(Tensor::from_op(
        os,
        out,
        Op::GlobalPool {
            x: x.clone(),
            kind,
            argmax,
        },
    ))
}

/// Reduce along the channel axis to (n, 1, h, w).
pub fn channelwise_reduce<S: Scalar>(x: &Tensor<S>, kind: PoolKind) -> Result<Tensor<S>> {
    let xs = x.shape();
    if xs.c == 0 {
        return Err(Error::config("channelwise_reduce requires at least one channel"));
    }
    let os = Shape::new(xs.n, 1, xs.h, xs.w);
    let data = x.data();
    let mut out = vec![S::zero(); os.numel()];
    let mut argmax = if kind == PoolKind::Max {
        Some(vec![0usize; os.numel()])
    } else {
        None
    };
    for n in 0..xs.n {
        for h in 0..xs.h {
            for w in 0..xs.w {
                let oi = os.idx(n, 0, h, w);
                match kind {
                    PoolKind::Avg => {
                        let mut acc = S::zero();
                        for c in 0..xs.c {
                            acc += data[xs.idx(n, c, h, w)];
                        }
                        out[oi] = acc / S::from_f64c(xs.c as f64);
                    }
                    PoolKind::Max => {
                        let mut best = S::neg_infinity();
                        let mut best_i = xs.idx(n, 0, h, w);
                        for c in 0..xs.c {
                            let i = xs.idx(n, c, h, w);
                            if data[i] > best {
                                best = data[i];
                                best_i = i;
                            }
                        }
                        out[oi] = best;
                        argmax.as_mut().unwrap()[oi] = best_i;
                    }
                }
            }
        }
    }
    drop(data);
    Ok(Tensor::from_op(
        os,
        out,
        Op::ChannelReduce {
            x: x.clone(),
            kind,
            argmax,
        },
    ))
}

pub(crate) fn pool2d_backward<S: Scalar>(
    gy: &[S],
    os: Shape,
    xs: Shape,
    kind: PoolKind,
    k: usize,
    stride: usize,
    padding: usize,
    argmax: Option<&[usize]>,
    dx: &mut [S],
) {
    match kind {
        PoolKind::Max => {
            let argmax = argmax.expect("max pool backward requires saved argmax");
            for (oi, &i) in argmax.iter().enumerate() {
                dx[i] += gy[oi];
            }
        }
        PoolKind::Avg => {
            for n in 0..xs.n {
                for c in 0..xs.c {
                    let x_base = xs.idx(n, c, 0, 0);
                    for o_h in 0..os.h {
                        for o_w in 0..os.w {
                            let h_lo = (o_h * stride).saturating_sub(padding);
                            let h_hi = (o_h * stride + k).saturating_sub(padding).min(xs.h);
                            let w_lo = (o_w * stride).saturating_sub(padding);
                            let w_hi = (o_w * stride + k).saturating_sub(padding).min(xs.w);
                            let count = (h_hi - h_lo) * (w_hi - w_lo);
                            let g = gy[os.idx(n, c, o_h, o_w)] / S::from_f64c(count as f64);
                            for ih in h_lo..h_hi {
                                for iw in w_lo..w_hi {
                                    dx[x_base + ih * xs.w + iw] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn global_pool_backward<S: Scalar>(
    gy: &[S],
    xs: Shape,
    kind: PoolKind,
    argmax: Option<&[usize]>,
    dx: &mut [S],
) {
    match kind {
        PoolKind::Max => {
            let argmax = argmax.expect("global max pool backward requires saved argmax");
            for (oi, &i) in argmax.iter().enumerate() {
                dx[i] += gy[oi];
            }
        }
        PoolKind::Avg => {
            let hw = xs.h * xs.w;
            let inv = S::one() / S::from_f64c(hw as f64);
            for n in 0..xs.n {
                for c in 0..xs.c {
                    let g = gy[n * xs.c + c] * inv;
                    let base = xs.idx(n, c, 0, 0);
                    for v in &mut dx[base..base + hw] {
                        *v += g;
                    }
                }
            }
        }
    }
}

pub(crate) fn channel_reduce_backward<S: Scalar>(
    gy: &[S],
    os: Shape,
    xs: Shape,
    kind: PoolKind,
    argmax: Option<&[usize]>,
    dx: &mut [S],
) {
    match kind {
        PoolKind::Max => {
            let argmax = argmax.expect("channel max backward requires saved argmax");
            for (oi, &i) in argmax.iter().enumerate() {
                dx[i] += gy[oi];
            }
        }
        PoolKind::Avg => {
            let inv = S::one() / S::from_f64c(xs.c as f64);
            for n in 0..xs.n {
                for h in 0..xs.h {
                    for w in 0..xs.w {
                        let g = gy[os.idx(n, 0, h, w)] * inv;
                        for c in 0..xs.c {
                            dx[xs.idx(n, c, h, w)] += g;
                        }
                    }
                }
            }
        }
    }
}
