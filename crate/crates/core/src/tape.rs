//! Reverse-mode gradient propagation.
//!
//! Every non-leaf tensor records the op that produced it together with its
//! parent handles, forming an implicit DAG. [`Tensor::backward`] walks that
//! DAG once in reverse topological order; tensors used multiple times receive
//! the sum of their downstream gradients.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ops::eltwise::{broadcast_kind, EltKind};
use crate::ops::pool::PoolKind;
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Tensor};

pub(crate) enum Op<S: Scalar> {
    Leaf,
    Conv2d {
        x: Tensor<S>,
        w: Tensor<S>,
        b: Option<Tensor<S>>,
        stride: usize,
        padding: usize,
        dilation: usize,
    },
    BatchNorm {
        x: Tensor<S>,
        gamma: Tensor<S>,
        beta: Tensor<S>,
        train: bool,
        xhat: Vec<S>,
        inv_std: Vec<S>,
    },
    Relu {
        x: Tensor<S>,
    },
    Sigmoid {
        x: Tensor<S>,
    },
    Pool2d {
        x: Tensor<S>,
        kind: PoolKind,
        k: usize,
        stride: usize,
        padding: usize,
        argmax: Option<Vec<usize>>,
    },
    GlobalPool {
        x: Tensor<S>,
        kind: PoolKind,
        argmax: Option<Vec<usize>>,
    },
    ChannelReduce {
        x: Tensor<S>,
        kind: PoolKind,
        argmax: Option<Vec<usize>>,
    },
    Bilinear {
        x: Tensor<S>,
    },
    Eltwise {
        a: Tensor<S>,
        b: Tensor<S>,
        kind: EltKind,
    },
    AxpBy {
        a: Tensor<S>,
        b: Tensor<S>,
        alpha: S,
        beta: S,
    },
    Scale {
        x: Tensor<S>,
        c: S,
    },
    Concat {
        xs: Vec<Tensor<S>>,
    },
    SumAll {
        x: Tensor<S>,
    },
    FocalCe {
        logits: Tensor<S>,
        target: LabelMap,
        gamma: S,
        ignore_index: i32,
        probs: Vec<S>,
        valid: usize,
    },
}

impl<S: Scalar> Op<S> {
    pub(crate) fn parents(&self) -> Vec<&Tensor<S>> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } => {
                let mut v = vec![x, w];
                if let Some(b) = b {
                    v.push(b);
                }
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::Pool2d { x, .. }
            | Op::GlobalPool { x, .. }
            | Op::ChannelReduce { x, .. }
            | Op::Bilinear { x }
            | Op::Scale { x, .. }
            | Op::SumAll { x } => vec![x],
            Op::Eltwise { a, b, .. } | Op::AxpBy { a, b, .. } => vec![a, b],
            Op::Concat { xs } => xs.iter().collect(),
            Op::FocalCe { logits, .. } => vec![logits],
        }
    }
}

struct GradStore<S: Scalar> {
    grads: HashMap<u64, Vec<S>>,
}

impl<S: Scalar> GradStore<S> {
    fn buf(&mut self, t: &Tensor<S>) -> &mut Vec<S> {
        self.grads
            .entry(t.id())
            .or_insert_with(|| vec![S::zero(); t.numel()])
    }

    /// Gradient buffer only if the parent participates in the tape.
    fn buf_if_needed(&mut self, t: &Tensor<S>) -> Option<&mut Vec<S>> {
        if t.inner.needs_grad {
            Some(self.buf(t))
        } else {
            None
        }
    }
}

impl<S: Scalar> Tensor<S> {
    /// Populate gradients of every reachable `requires_grad` leaf with
    /// d(self)/d(leaf). `self` must be a scalar produced on the tape.
    pub fn backward(&self) -> Result<()> {
        if !self.shape().is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar output, got shape {}",
                self.shape()
            )));
        }
        if matches!(self.inner.op, Op::Leaf) && !self.inner.requires_grad {
            return Err(Error::usage(
                "backward on a detached tensor: nothing was taped",
            ));
        }

        // Post-order DFS gives reverse-topological order when iterated backwards.
        let mut order: Vec<Tensor<S>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<S>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in t.inner.op.parents() {
                if p.inner.needs_grad && !visited.contains(&p.id()) {
                    stack.push(((*p).clone(), false));
                }
            }
        }

        let mut store = GradStore {
            grads: HashMap::new(),
        };
        store.grads.insert(self.id(), vec![S::one()]);

        for t in order.iter().rev() {
            let Some(gy) = store.grads.remove(&t.id()) else {
                continue;
            };
            if t.inner.requires_grad {
                t.accumulate_grad(&gy);
            }
            propagate(t, &gy, &mut store);
        }
        Ok(())
    }
}

fn propagate<S: Scalar>(t: &Tensor<S>, gy: &[S], store: &mut GradStore<S>) {
    use crate::ops::{bn, conv, eltwise, loss, pool, resize};
    let os = t.shape();
    match &t.inner.op {
        Op::Leaf => {}
        Op::Conv2d {
            x,
            w,
            b,
            stride,
            padding,
            dilation,
        } => {
            if x.inner.needs_grad {
                let wd = w.data();
                let dx = store.buf(x);
                conv::backward_input(gy, os, &wd, w.shape(), x.shape(), *stride, *padding, *dilation, dx);
            }
            if w.inner.needs_grad {
                let xd = x.data();
                let dw = store.buf(w);
                conv::backward_weight(gy, os, &xd, x.shape(), w.shape(), *stride, *padding, *dilation, dw);
            }
            if let Some(b) = b {
                if let Some(db) = store.buf_if_needed(b) {
                    conv::backward_bias(gy, os, db);
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            train,
            xhat,
            inv_std,
        } => {
            if x.inner.needs_grad {
                let gd = gamma.data();
                let dx = store.buf(x);
                bn::bn_backward_input(gy, os, &gd, xhat, inv_std, *train, dx);
            }
            if gamma.inner.needs_grad {
                let dgamma = store.buf(gamma);
                bn::bn_backward_affine(gy, os, xhat, Some(dgamma), None);
            }
            if beta.inner.needs_grad {
                let dbeta = store.buf(beta);
                bn::bn_backward_affine(gy, os, xhat, None, Some(dbeta));
            }
        }
        Op::Relu { x } => {
            if let Some(dx) = store.buf_if_needed(x) {
                let out = t.data();
                for i in 0..gy.len() {
                    if out[i] > S::zero() {
                        dx[i] += gy[i];
                    }
                }
            }
        }
        Op::Sigmoid { x } => {
            if let Some(dx) = store.buf_if_needed(x) {
                let out = t.data();
                for i in 0..gy.len() {
                    dx[i] += gy[i] * out[i] * (S::one() - out[i]);
                }
            }
        }
        Op::Pool2d {
            x,
            kind,
            k,
            stride,
            padding,
            argmax,
        } => {
            if let Some(dx) = store.buf_if_needed(x) {
                pool::pool2d_backward(gy, os, x.shape(), *kind, *k, *stride, *padding, argmax.as_deref(), dx);
            }
        }
        Op::GlobalPool { x, kind, argmax } => {
            if let Some(dx) = store.buf_if_needed(x) {
                pool::global_pool_backward(gy, x.shape(), *kind, argmax.as_deref(), dx);
            }
        }
        Op::ChannelReduce { x, kind, argmax } => {
            if let Some(dx) = store.buf_if_needed(x) {
                pool::channel_reduce_backward(gy, os, x.shape(), *kind, argmax.as_deref(), dx);
            }
        }
        Op::Bilinear { x } => {
            if let Some(dx) = store.buf_if_needed(x) {
                resize::bilinear_backward(gy, os, x.shape(), dx);
            }
        }
        Op::Eltwise { a, b, kind } => {
            let bc = broadcast_kind(a.shape(), b.shape()).expect("taped eltwise shapes");
            if a.inner.needs_grad {
                let bd = b.data();
                let da = store.buf(a);
                eltwise::eltwise_backward_a(gy, os, &bd, bc, *kind, da);
            }
            if b.inner.needs_grad {
                let ad = a.data();
                let db = store.buf(b);
                eltwise::eltwise_backward_b(gy, os, &ad, bc, *kind, db);
            }
        }
        Op::AxpBy { a, b, alpha, beta } => {
            if let Some(da) = store.buf_if_needed(a) {
                for i in 0..gy.len() {
                    da[i] += *alpha * gy[i];
                }
            }
            if let Some(db) = store.buf_if_needed(b) {
                for i in 0..gy.len() {
                    db[i] += *beta * gy[i];
                }
            }
        }
        Op::Scale { x, c } => {
            if let Some(dx) = store.buf_if_needed(x) {
                for i in 0..gy.len() {
                    dx[i] += *c * gy[i];
                }
            }
        }
        Op::Concat { xs } => {
            let hw = os.h * os.w;
            let mut c_off = 0;
            for x in xs {
                let s = x.shape();
                if let Some(dx) = store.buf_if_needed(x) {
                    for n in 0..s.n {
                        let src = os.idx(n, c_off, 0, 0);
                        let dst = s.idx(n, 0, 0, 0);
                        let chunk = s.c * hw;
                        for i in 0..chunk {
                            dx[dst + i] += gy[src + i];
                        }
                    }
                }
                c_off += s.c;
            }
        }
        Op::SumAll { x } => {
            if let Some(dx) = store.buf_if_needed(x) {
                for v in dx.iter_mut() {
                    *v += gy[0];
                }
            }
        }
        Op::FocalCe {
            logits,
            target,
            gamma,
            ignore_index,
            probs,
            valid,
        } => {
            if let Some(dx) = store.buf_if_needed(logits) {
                loss::focal_ce_backward(
                    gy[0],
                    logits.shape(),
                    target,
                    *gamma,
                    *ignore_index,
                    probs,
                    *valid,
                    dx,
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::ops;
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn sum_grad_is_ones() {
        let x = Tensor::<f64>::param(Shape::new(1, 2, 2, 2), (0..8).map(|v| v as f64).collect())
            .unwrap();
        let y = ops::sum_all(&x);
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn sum_of_squares_grad_is_2x() {
        let vals: Vec<f64> = vec![0.5, -1.0, 2.0, 3.0];
        let x = Tensor::<f64>::param(Shape::new(1, 1, 2, 2), vals.clone()).unwrap();
        let y = ops::sum_all(&ops::mul(&x, &x).unwrap());
        y.backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, v) in g.iter().zip(&vals) {
            assert!((gi - 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn multiple_use_accumulates() {
        // y = sum(x + x) => grad = 2
        let x = Tensor::<f64>::param(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let y = ops::sum_all(&ops::add(&x, &x).unwrap());
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn backward_on_detached_errors() {
        let x = Tensor::<f64>::scalar(1.0);
        assert!(x.backward().is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::<f64>::param(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let y = ops::add(&x, &x).unwrap();
        assert!(y.backward().is_err());
    }
}
