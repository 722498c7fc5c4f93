//! Elementwise arithmetic, activations, channel concatenation and the scalar
//! reduction that roots the tape.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EltKind {
    Add,
    Mul,
}

/// How the second operand maps onto the first.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Broadcast {
    /// Shapes equal.
    None,
    /// b is (n, c, 1, 1), one value per channel.
    Channel,
    /// b is (n, 1, h, w), one value per position.
    Spatial,
}

pub(crate) fn broadcast_kind(a: Shape, b: Shape) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::None);
    }
    if b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1 {
        return Ok(Broadcast::Channel);
    }
    if b.n == a.n && b.c == 1 && b.h == a.h && b.w == a.w {
        return Ok(Broadcast::Spatial);
    }
    Err(Error::config(format!(
        "shapes {} and {} are not broadcast-compatible",
        a, b
    )))
}

fn eltwise<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, kind: EltKind) -> Result<Tensor<S>> {
    let os = a.shape();
    let bc = broadcast_kind(os, b.shape())?;
    let ad = a.data();
    let bd = b.data();
    let hw = os.h * os.w;
    let mut out = vec![S::zero(); os.numel()];
    for n in 0..os.n {
        for c in 0..os.c {
            let base = os.idx(n, c, 0, 0);
            for i in 0..hw {
                let av = ad[base + i];
                let bv = match bc {
                    Broadcast::None => bd[base + i],
                    Broadcast::Channel => bd[n * os.c + c],
                    Broadcast::Spatial => bd[n * hw + i],
                };
                out[base + i] = match kind {
                    EltKind::Add => av + bv,
                    EltKind::Mul => av * bv,
                };
            }
        }
    }
    drop(ad);
    drop(bd);
    Ok(Tensor::from_op(
        os,
        out,
        Op::Eltwise {
            a: a.clone(),
            b: b.clone(),
            kind,
        },
    ))
}

/// Elementwise sum; `b` may broadcast as a (n,c,1,1) channel map or a
/// (n,1,h,w) spatial map.
pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    eltwise(a, b, EltKind::Add)
}

/// Elementwise product with the same broadcast rules as [`add`].
pub fn mul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    eltwise(a, b, EltKind::Mul)
}

/// `alpha * a + beta * b` for equal shapes.
pub fn axpby<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, alpha: S, beta: S) -> Result<Tensor<S>> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!(
            "axpby shape mismatch: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let os = a.shape();
    let ad = a.data();
    let bd = b.data();
    let out: Vec<S> = ad
        .iter()
        .zip(bd.iter())
        .map(|(&x, &y)| alpha * x + beta * y)
        .collect();
    drop(ad);
    drop(bd);
    Ok(Tensor::from_op(
        os,
        out,
        Op::AxpBy {
            a: a.clone(),
            b: b.clone(),
            alpha,
            beta,
        },
    ))
}

pub fn scale<S: Scalar>(x: &Tensor<S>, c: S) -> Tensor<S> {
    let out: Vec<S> = x.data().iter().map(|&v| c * v).collect();
    Tensor::from_op(x.shape(), out, Op::Scale { x: x.clone(), c })
}

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let out: Vec<S> = x
        .data()
        .iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect();
    Tensor::from_op(x.shape(), out, Op::Relu { x: x.clone() })
}

/// Numerically stable logistic sigmoid; output lies strictly in (0,1).
pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let out: Vec<S> = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::from_op(x.shape(), out, Op::Sigmoid { x: x.clone() })
}

pub fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// Sum all elements down to a (1,1,1,1) scalar.
pub fn sum_all<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut acc = S::zero();
    for v in x.data().iter() {
        acc += *v;
    }
    Tensor::from_op(
        Shape::new(1, 1, 1, 1),
        vec![acc],
        Op::SumAll { x: x.clone() },
    )
}

/// Concatenate along the channel axis; input order is preserved.
pub fn concat_channels<S: Scalar>(xs: &[Tensor<S>]) -> Result<Tensor<S>> {
    if xs.is_empty() {
        return Err(Error::usage("concat_channels needs at least one input"));
    }
    let first = xs[0].shape();
    let mut total_c = 0;
    for x in xs {
        let s = x.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::config(format!(
                "concat_channels spatial mismatch: {} vs {}",
                first, s
            )));
        }
        total_c += s.c;
    }
    let os = Shape::new(first.n, total_c, first.h, first.w);
    let hw = first.h * first.w;
    let mut out = vec![S::zero(); os.numel()];
    for n in 0..first.n {
        let mut c_off = 0;
        for x in xs {
            let s = x.shape();
            let chunk = s.c * hw;
            let src = x.data();
            let src_base = s.idx(n, 0, 0, 0);
            let dst_base = os.idx(n, c_off, 0, 0);
            out[dst_base..dst_base + chunk].copy_from_slice(&src[src_base..src_base + chunk]);
            c_off += s.c;
        }
    }
    Ok(Tensor::from_op(os, out, Op::Concat { xs: xs.to_vec() }))
}

pub(crate) fn eltwise_backward_a<S: Scalar>(
    gy: &[S],
    os: Shape,
    b: &[S],
    bc: Broadcast,
    kind: EltKind,
    da: &mut [S],
) {
    let hw = os.h * os.w;
    for n in 0..os.n {
        for c in 0..os.c {
            let base = os.idx(n, c, 0, 0);
            for i in 0..hw {
                let g = gy[base + i];
                da[base + i] += match kind {
                    EltKind::Add => g,
                    EltKind::Mul => {
                        let bv = match bc {
                            Broadcast::None => b[base + i],
                            Broadcast::Channel => b[n * os.c + c],
                            Broadcast::Spatial => b[n * hw + i],
                        };
                        g * bv
                    }
                };
            }
        }
    }
}

pub(crate) fn eltwise_backward_b<S: Scalar>(
    gy: &[S],
    os: Shape,
    a: &[S],
    bc: Broadcast,
    kind: EltKind,
    db: &mut [S],
) {
    let hw = os.h * os.w;
    for n in 0..os.n {
        for c in 0..os.c {
            let base = os.idx(n, c, 0, 0);
            for i in 0..hw {
                let g = match kind {
                    EltKind::Add => gy[base + i],
                    EltKind::Mul => gy[base + i] * a[base + i],
                };
                match bc {
                    Broadcast::None => db[base + i] += g,
                    Broadcast::Channel => db[n * os.c + c] += g,
                    Broadcast::Spatial => db[n * hw + i] += g,
                }
            }
        }
    }
}
