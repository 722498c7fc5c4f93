//! Independent straight-line / nested-loop oracles used by the oracle and
//! acceptance suites. These deliberately share no kernel code with the crate:
//! every one is a direct transcription of the defining formula.

#![allow(dead_code)]

use cross_cbam::attention::{Ccbam, ChannelAttention, SeBlock, SpatialAttention};
use cross_cbam::ops::PoolKind;
use cross_cbam::tensor::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// `max |a-b| / max(|a|,|b|,floor)` over two equal-length slices.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn conv2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: Option<&Tensor<f64>>,
    stride: usize,
    pad: usize,
    dil: usize,
) -> Vec<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let oh = (xs.h + 2 * pad - dil * (ws.h - 1) - 1) / stride + 1;
    let ow = (xs.w + 2 * pad - dil * (ws.w - 1) - 1) / stride + 1;
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![0.0; xs.n * ws.n * oh * ow];
    for n in 0..xs.n {
        for oc in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = match b {
                        Some(bias) => bias.data()[oc],
                        None => 0.0,
                    };
                    for ic in 0..ws.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (oy * stride + ky * dil) as i64 - pad as i64;
                                let ix = (ox * stride + kx * dil) as i64 - pad as i64;
                                if iy < 0 || iy >= xs.h as i64 || ix < 0 || ix >= xs.w as i64 {
                                    continue;
                                }
                                acc += xd[xs.idx(n, ic, iy as usize, ix as usize)]
                                    * wd[ws.idx(oc, ic, ky, kx)];
                            }
                        }
                    }
                    out[((n * ws.n + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn pool2d_oracle(x: &Tensor<f64>, kind: PoolKind, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let xs = x.shape();
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    let xd = x.data();
    let mut out = vec![0.0; xs.n * xs.c * oh * ow];
    for n in 0..xs.n {
        for c in 0..xs.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = f64::NEG_INFINITY;
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as i64 - pad as i64;
                            let ix = (ox * stride + kx) as i64 - pad as i64;
                            if iy < 0 || iy >= xs.h as i64 || ix < 0 || ix >= xs.w as i64 {
                                continue;
                            }
                            let v = xd[xs.idx(n, c, iy as usize, ix as usize)];
                            acc = acc.max(v);
                            sum += v;
                            count += 1;
                        }
                    }
                    out[((n * xs.c + c) * oh + oy) * ow + ox] = match kind {
                        PoolKind::Max => acc,
                        // padding never contributes to the divisor
                        PoolKind::Avg => sum / count as f64,
                    };
                }
            }
        }
    }
    out
}

pub fn bilinear_oracle(x: &Tensor<f64>, oh: usize, ow: usize) -> Vec<f64> {
    let xs = x.shape();
    let xd = x.data();
    let mut out = vec![0.0; xs.n * xs.c * oh * ow];
    let src_coord = |o: usize, olen: usize, ilen: usize| -> (usize, usize, f64) {
        let s = (o as f64 + 0.5) * ilen as f64 / olen as f64 - 0.5;
        let s = s.max(0.0);
        let i0 = (s.floor() as usize).min(ilen - 1);
        let i1 = (i0 + 1).min(ilen - 1);
        (i0, i1, s - i0 as f64)
    };
    for n in 0..xs.n {
        for c in 0..xs.c {
            for oy in 0..oh {
                let (y0, y1, fy) = src_coord(oy, oh, xs.h);
                for ox in 0..ow {
                    let (x0, x1, fx) = src_coord(ox, ow, xs.w);
                    let v00 = xd[xs.idx(n, c, y0, x0)];
                    let v01 = xd[xs.idx(n, c, y0, x1)];
                    let v10 = xd[xs.idx(n, c, y1, x0)];
                    let v11 = xd[xs.idx(n, c, y1, x1)];
                    let top = v00 + (v01 - v00) * fx;
                    let bot = v10 + (v11 - v10) * fx;
                    out[((n * xs.c + c) * oh + oy) * ow + ox] = top + (bot - top) * fy;
                }
            }
        }
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Shared-bottleneck channel attention: sigmoid(mlp(max) + mlp(avg)),
/// one gate per (n, c).
pub fn channel_attention_oracle(ca: &ChannelAttention<f64>, x: &Tensor<f64>) -> Vec<f64> {
    assert!(ca.max_branch.is_none(), "oracle covers the shared bottleneck");
    let xs = x.shape();
    let xd = x.data();
    let rw = ca.reduce.weight.data();
    let rb = ca.reduce.bias.as_ref().unwrap().data();
    let ew = ca.expand.weight.data();
    let eb = ca.expand.bias.as_ref().unwrap().data();
    let mid = rb.len();
    let mut out = vec![0.0; xs.n * xs.c];
    for n in 0..xs.n {
        let mut mx = vec![f64::NEG_INFINITY; xs.c];
        let mut av = vec![0.0; xs.c];
        for c in 0..xs.c {
            for y in 0..xs.h {
                for xw in 0..xs.w {
                    let v = xd[xs.idx(n, c, y, xw)];
                    mx[c] = mx[c].max(v);
                    av[c] += v;
                }
            }
            av[c] /= (xs.h * xs.w) as f64;
        }
        let mlp = |v: &[f64]| -> Vec<f64> {
            let mut hidden = vec![0.0; mid];
            for j in 0..mid {
                let mut acc = rb[j];
                for c in 0..xs.c {
                    acc += rw[j * xs.c + c] * v[c];
                }
                hidden[j] = acc.max(0.0);
            }
            (0..xs.c)
                .map(|c| {
                    let mut acc = eb[c];
                    for j in 0..mid {
                        acc += ew[c * mid + j] * hidden[j];
                    }
                    acc
                })
                .collect()
        };
        let bm = mlp(&mx);
        let ba = mlp(&av);
        for c in 0..xs.c {
            out[n * xs.c + c] = sigmoid(bm[c] + ba[c]);
        }
    }
    out
}

/// Spatial attention: sigmoid(w_max*max_c + w_avg*mean_c + b) per position.
pub fn spatial_attention_oracle(sa: &SpatialAttention<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let xs = x.shape();
    let xd = x.data();
    let w = sa.fuse.weight.data();
    let b = sa.fuse.bias.as_ref().unwrap().data()[0];
    let (w_max, w_avg) = (w[0], w[1]);
    let mut out = vec![0.0; xs.n * xs.h * xs.w];
    for n in 0..xs.n {
        for y in 0..xs.h {
            for xw in 0..xs.w {
                let mut mx = f64::NEG_INFINITY;
                let mut av = 0.0;
                for c in 0..xs.c {
                    let v = xd[xs.idx(n, c, y, xw)];
                    mx = mx.max(v);
                    av += v;
                }
                av /= xs.c as f64;
                out[(n * xs.h + y) * xs.w + xw] = sigmoid(w_max * mx + w_avg * av + b);
            }
        }
    }
    out
}

/// SE: x scaled per channel by sigmoid(expand(relu(reduce(avgpool(x))))).
pub fn se_oracle(se: &SeBlock<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let xs = x.shape();
    let xd = x.data();
    let rw = se.reduce.weight.data();
    let rb = se.reduce.bias.as_ref().unwrap().data();
    let ew = se.expand.weight.data();
    let eb = se.expand.bias.as_ref().unwrap().data();
    let mid = rb.len();
    let mut out = vec![0.0; xs.numel()];
    for n in 0..xs.n {
        let mut av = vec![0.0; xs.c];
        for c in 0..xs.c {
            for y in 0..xs.h {
                for xw in 0..xs.w {
                    av[c] += xd[xs.idx(n, c, y, xw)];
                }
            }
            av[c] /= (xs.h * xs.w) as f64;
        }
        let mut hidden = vec![0.0; mid];
        for j in 0..mid {
            let mut acc = rb[j];
            for c in 0..xs.c {
                acc += rw[j * xs.c + c] * av[c];
            }
            hidden[j] = acc.max(0.0);
        }
        for c in 0..xs.c {
            let mut acc = eb[c];
            for j in 0..mid {
                acc += ew[c * mid + j] * hidden[j];
            }
            let gate = sigmoid(acc);
            for y in 0..xs.h {
                for xw in 0..xs.w {
                    out[xs.idx(n, c, y, xw)] = xd[xs.idx(n, c, y, xw)] * gate;
                }
            }
        }
    }
    out
}

/// The cross fusion, written straight from its defining equation in terms of
/// the attention oracles above.
pub fn ccbam_oracle(m: &Ccbam<f64>, high: &Tensor<f64>, low: &Tensor<f64>) -> Vec<f64> {
    let s = high.shape();
    let c_high = channel_attention_oracle(&m.ca_high, high);
    let c_low = channel_attention_oracle(&m.ca_low, low);
    let hd = high.data();
    let ld = low.data();
    let gate = |t: &[f64], g: &[f64]| -> Tensor<f64> {
        let mut out = vec![0.0; s.numel()];
        for n in 0..s.n {
            for c in 0..s.c {
                for y in 0..s.h {
                    for x in 0..s.w {
                        out[s.idx(n, c, y, x)] = t[s.idx(n, c, y, x)] * g[n * s.c + c];
                    }
                }
            }
        }
        Tensor::from_vec(s, out).unwrap()
    };
    // F_high = input_low * C_high, F_low = input_high * C_low
    let f_high = gate(&ld, &c_high);
    let f_low = gate(&hd, &c_low);
    let s_high = spatial_attention_oracle(&m.sa_high, &f_high);
    let s_low = spatial_attention_oracle(&m.sa_low, &f_low);
    let fh = f_high.data();
    let fl = f_low.data();
    let mut out = vec![0.0; s.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let i = s.idx(n, c, y, x);
                    let j = (n * s.h + y) * s.w + x;
                    out[i] = fl[i] * s_high[j] + fh[i] * s_low[j];
                }
            }
        }
    }
    out
}
