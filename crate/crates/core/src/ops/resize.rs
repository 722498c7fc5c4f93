//! Bilinear resize with half-pixel centers (no corner alignment), clamped at
//! the borders. The sampling weights are always computed in f64 so f32 and f64
//! tensors resize through identical coordinates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{Shape, Tensor};

/// Per-axis tap: two source indices and the interpolation weight of the second.
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let src = src.max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = src - i0 as f64;
            let frac = if i1 == i0 { 0.0 } else { frac };
            (i0, i1, frac)
        })
        .collect()
}

pub fn bilinear_resize<S: Scalar>(x: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    let xs = x.shape();
    if out_h == 0 || out_w == 0 {
        return Err(Error::usage("bilinear_resize target dims must be positive"));
    }
    if xs.h == 0 || xs.w == 0 {
        return Err(Error::usage("bilinear_resize requires non-empty input"));
    }
    let os = Shape::new(xs.n, xs.c, out_h, out_w);
    let ty = taps(out_h, xs.h);
    let tx = taps(out_w, xs.w);
    let data = x.data();
    let mut out = vec![S::zero(); os.numel()];
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = xs.idx(n, c, 0, 0);
            let obase = os.idx(n, c, 0, 0);
            for (oh, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = base + y0 * xs.w;
                let r1 = base + y1 * xs.w;
                let orow = obase + oh * out_w;
                for (ow, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let w00 = S::from_f64c((1.0 - fy) * (1.0 - fx));
                    let w01 = S::from_f64c((1.0 - fy) * fx);
                    let w10 = S::from_f64c(fy * (1.0 - fx));
                    let w11 = S::from_f64c(fy * fx);
                    out[orow + ow] = w00 * data[r0 + x0]
                        + w01 * data[r0 + x1]
                        + w10 * data[r1 + x0]
                        + w11 * data[r1 + x1];
                }
            }
        }
    }
    drop(data);
    Ok(Tensor::from_op(os, out, Op::Bilinear { x: x.clone() }))
}

pub(crate) fn bilinear_backward<S: Scalar>(gy: &[S], os: Shape, xs: Shape, dx: &mut [S]) {
    let ty = taps(os.h, xs.h);
    let tx = taps(os.w, xs.w);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = xs.idx(n, c, 0, 0);
            let obase = os.idx(n, c, 0, 0);
            for (oh, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = base + y0 * xs.w;
                let r1 = base + y1 * xs.w;
                let orow = obase + oh * os.w;
                for (ow, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = gy[orow + ow];
                    dx[r0 + x0] += S::from_f64c((1.0 - fy) * (1.0 - fx)) * g;
                    dx[r0 + x1] += S::from_f64c((1.0 - fy) * fx) * g;
                    dx[r1 + x0] += S::from_f64c(fy * (1.0 - fx)) * g;
                    dx[r1 + x1] += S::from_f64c(fy * fx) * g;
                }
            }
        }
    }
}
