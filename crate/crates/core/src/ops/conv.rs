//! 2-D convolution with stride, zero padding and dilation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{Shape, Tensor};

/// Output spatial extent of a convolution/pooling window sweep.
pub fn out_extent(input: usize, k: usize, stride: usize, padding: usize, dilation: usize) -> Option<usize> {
    let eff = dilation * (k - 1) + 1;
    let padded = input + 2 * padding;
    if eff > padded {
        return None;
    }
    Some((padded - eff) / stride + 1)
}

pub(crate) fn conv_out_shape(
    x: Shape,
    w: Shape,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Result<Shape> {
    if stride == 0 || dilation == 0 {
        return Err(Error::config("stride and dilation must be positive"));
    }
    if x.c != w.c {
        return Err(Error::config(format!(
            "conv2d channel mismatch: input has {} channels, kernel expects {}",
            x.c, w.c
        )));
    }
    let oh = out_extent(x.h, w.h, stride, padding, dilation);
    let ow = out_extent(x.w, w.w, stride, padding, dilation);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => Ok(Shape::new(x.n, w.n, oh, ow)),
        _ => Err(Error::config(format!(
            "conv2d kernel {}x{} (dilation {}) does not fit padded input {}x{} (padding {})",
            w.h, w.w, dilation, x.h, x.w, padding
        ))),
    }
}

/// `w` is laid out (out_ch, in_ch, kh, kw); `b` is (1, out_ch, 1, 1).
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    let ws = w.shape();
    let os = conv_out_shape(xs, ws, stride, padding, dilation)?;
    if let Some(b) = b {
        if b.numel() != ws.n {
            return Err(Error::config(format!(
                "conv2d bias has {} elements, expected {}",
                b.numel(),
                ws.n
            )));
        }
    }
    let mut out = vec![S::zero(); os.numel()];
    forward_kernel(
        &x.data(),
        xs,
        &w.data(),
        ws,
        b.map(|b| b.to_vec()).as_deref(),
        os,
        stride,
        padding,
        dilation,
        &mut out,
    );
    Ok(Tensor::from_op(
        os,
        out,
        Op::Conv2d {
            x: x.clone(),
            w: w.clone(),
            b: b.cloned(),
            stride,
            padding,
            dilation,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn forward_kernel<S: Scalar>(
    x: &[S],
    xs: Shape,
    w: &[S],
    ws: Shape,
    b: Option<&[S]>,
    os: Shape,
    stride: usize,
    padding: usize,
    dilation: usize,
    out: &mut [S],
) {
    let (kh, kw) = (ws.h, ws.w);
    for n in 0..xs.n {
        for oc in 0..ws.n {
            let out_base = os.idx(n, oc, 0, 0);
            if let Some(b) = b {
                out[out_base..out_base + os.h * os.w].fill(b[oc]);
            }
            for ic in 0..xs.c {
                let x_base = xs.idx(n, ic, 0, 0);
                for dkh in 0..kh {
                    for dkw in 0..kw {
                        let wv = w[ws.idx(oc, ic, dkh, dkw)];
                        if wv == S::zero() {
                            continue;
                        }
                        let koff_h = dkh * dilation;
                        let koff_w = dkw * dilation;
                        let (ow_lo, ow_hi) = tap_range(os.w, xs.w, stride, padding, koff_w);
                        for oh in 0..os.h {
                            let ih = (oh * stride + koff_h).wrapping_sub(padding);
                            if ih >= xs.h {
                                continue;
                            }
                            let x_row = x_base + ih * xs.w;
                            let o_row = out_base + oh * os.w;
                            for ow in ow_lo..ow_hi {
                                let iw = ow * stride + koff_w - padding;
                                out[o_row + ow] += wv * x[x_row + iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Range of output positions whose tap `ow*stride + koff - padding` lands
/// inside `[0, input_w)`.
#[inline]
fn tap_range(out_w: usize, in_w: usize, stride: usize, padding: usize, koff: usize) -> (usize, usize) {
    let lo = if koff >= padding {
        0
    } else {
        (padding - koff).div_ceil(stride)
    };
    // largest ow with ow*stride + koff - padding <= in_w - 1
    let hi = if in_w + padding > koff {
        ((in_w + padding - koff - 1) / stride + 1).min(out_w)
    } else {
        0
    };
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_input<S: Scalar>(
    gy: &[S],
    os: Shape,
    w: &[S],
    ws: Shape,
    xs: Shape,
    stride: usize,
    padding: usize,
    dilation: usize,
    dx: &mut [S],
) {
    for n in 0..xs.n {
        for oc in 0..ws.n {
            let gy_base = os.idx(n, oc, 0, 0);
            for ic in 0..xs.c {
                let dx_base = xs.idx(n, ic, 0, 0);
                for dkh in 0..ws.h {
                    for dkw in 0..ws.w {
                        let wv = w[ws.idx(oc, ic, dkh, dkw)];
                        if wv == S::zero() {
                            continue;
                        }
                        let koff_h = dkh * dilation;
                        let koff_w = dkw * dilation;
                        let (ow_lo, ow_hi) = tap_range(os.w, xs.w, stride, padding, koff_w);
                        for oh in 0..os.h {
                            let ih = (oh * stride + koff_h).wrapping_sub(padding);
                            if ih >= xs.h {
                                continue;
                            }
                            let dx_row = dx_base + ih * xs.w;
                            let gy_row = gy_base + oh * os.w;
                            for ow in ow_lo..ow_hi {
                                let iw = ow * stride + koff_w - padding;
                                dx[dx_row + iw] += wv * gy[gy_row + ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_weight<S: Scalar>(
    gy: &[S],
    os: Shape,
    x: &[S],
    xs: Shape,
    ws: Shape,
    stride: usize,
    padding: usize,
    dilation: usize,
    dw: &mut [S],
) {
    for n in 0..xs.n {
        for oc in 0..ws.n {
            let gy_base = os.idx(n, oc, 0, 0);
            for ic in 0..xs.c {
                let x_base = xs.idx(n, ic, 0, 0);
                for dkh in 0..ws.h {
                    for dkw in 0..ws.w {
                        let koff_h = dkh * dilation;
                        let koff_w = dkw * dilation;
                        let (ow_lo, ow_hi) = tap_range(os.w, xs.w, stride, padding, koff_w);
                        let mut acc = S::zero();
                        for oh in 0..os.h {
                            let ih = (oh * stride + koff_h).wrapping_sub(padding);
                            if ih >= xs.h {
                                continue;
                            }
                            let x_row = x_base + ih * xs.w;
                            let gy_row = gy_base + oh * os.w;
                            for ow in ow_lo..ow_hi {
                                let iw = ow * stride + koff_w - padding;
                                acc += gy[gy_row + ow] * x[x_row + iw];
                            }
                        }
                        dw[ws.idx(oc, ic, dkh, dkw)] += acc;
                    }
                }
            }
        }
    }
}

pub(crate) fn backward_bias<S: Scalar>(gy: &[S], os: Shape, db: &mut [S]) {
    for n in 0..os.n {
        for oc in 0..os.c {
            let base = os.idx(n, oc, 0, 0);
            let mut acc = S::zero();
            for v in &gy[base..base + os.h * os.w] {
                acc += *v;
            }
            db[oc] += acc;
        }
    }
}
