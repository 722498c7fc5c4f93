//! Dense 4-D NCHW tensor with an optional gradient buffer.

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Op;

/// Tensor shape in batch x channel x height x width order.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Row-major flat index, n -> c -> h -> w.
    #[inline(always)]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) struct TensorInner<S: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Shape,
    pub(crate) data: RefCell<Vec<S>>,
    /// Leaf flag: gradients accumulate here after backward().
    pub(crate) requires_grad: bool,
    /// True if this tensor or any ancestor requires grad; controls taping.
    pub(crate) needs_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<S>>>,
    pub(crate) op: Op<S>,
}

/// Cheap-to-clone handle to a tensor node.
///
/// Tensors are immutable after construction except through [`Tensor::data_mut`]
/// (used by the optimizer and for batch-norm running statistics). Non-leaf
/// tensors carry the operation that produced them so that [`Tensor::backward`]
/// can propagate gradients in reverse topological order.
pub struct Tensor<S: Scalar> {
    pub(crate) inner: Rc<TensorInner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> Tensor<S> {
    fn new_inner(shape: Shape, data: Vec<S>, requires_grad: bool, needs_grad: bool, op: Op<S>) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        Tensor {
            inner: Rc::new(TensorInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                requires_grad,
                needs_grad,
                grad: RefCell::new(None),
                op,
            }),
        }
    }

    /// Leaf tensor from raw data.
    pub fn from_vec(shape: Shape, data: Vec<S>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::usage(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Self::new_inner(shape, data, false, false, Op::Leaf))
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::new_inner(shape, vec![S::zero(); shape.numel()], false, false, Op::Leaf)
    }

    pub fn full(shape: Shape, v: S) -> Self {
        Self::new_inner(shape, vec![v; shape.numel()], false, false, Op::Leaf)
    }

    /// Scalar (1,1,1,1) tensor.
    pub fn scalar(v: S) -> Self {
        Self::full(Shape::new(1, 1, 1, 1), v)
    }

    /// Leaf parameter: participates in gradient accumulation.
    pub fn param(shape: Shape, data: Vec<S>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::usage(format!(
                "data length {} does not match shape {}",
                data.len(),
                shape
            )));
        }
        Ok(Self::new_inner(shape, data, true, true, Op::Leaf))
    }

    /// Result of an operation. If no input needs gradients the op record is
    /// dropped so inference holds no graph.
    pub(crate) fn from_op(shape: Shape, data: Vec<S>, op: Op<S>) -> Self {
        let needs = op.parents().iter().any(|p| p.inner.needs_grad);
        let op = if needs { op } else { Op::Leaf };
        Self::new_inner(shape, data, false, needs, op)
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.numel()
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<S>> {
        self.inner.data.borrow()
    }

    /// In-place mutation of the raw buffer. Contract: only optimizer updates
    /// and batch-norm running-statistic updates go through here; never mutate
    /// a tensor that is still referenced by a live tape.
    pub fn data_mut(&self) -> RefMut<'_, Vec<S>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.data.borrow().clone()
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> S {
        self.inner.data.borrow()[self.inner.shape.idx(n, c, h, w)]
    }

    /// Value of a scalar (1-element) tensor.
    pub fn item(&self) -> S {
        debug_assert!(self.inner.shape.is_scalar());
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[S]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(g) {
                    *a += *b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Copy of this tensor cut off from the tape.
    pub fn detach(&self) -> Self {
        Self::new_inner(self.inner.shape, self.to_vec(), false, false, Op::Leaf)
    }

    /// Leaf tensor holding channels `lo..hi`.
    pub fn slice_channels(&self, lo: usize, hi: usize) -> Result<Self> {
        let s = self.inner.shape;
        if lo >= hi || hi > s.c {
            return Err(Error::usage(format!(
                "channel slice {}..{} out of range for {} channels",
                lo, hi, s.c
            )));
        }
        let out_shape = Shape::new(s.n, hi - lo, s.h, s.w);
        let data = self.inner.data.borrow();
        let mut out = Vec::with_capacity(out_shape.numel());
        for n in 0..s.n {
            for c in lo..hi {
                let base = s.idx(n, c, 0, 0);
                out.extend_from_slice(&data[base..base + s.h * s.w]);
            }
        }
        Ok(Self::new_inner(out_shape, out, false, false, Op::Leaf))
    }

    /// Largest absolute difference to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor<S>) -> S {
        assert_eq!(self.shape(), other.shape());
        let a = self.data();
        let b = other.data();
        let mut m = S::zero();
        for (x, y) in a.iter().zip(b.iter()) {
            let d = (*x - *y).abs();
            if d > m {
                m = d;
            }
        }
        m
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor{} id={} requires_grad={}",
            self.inner.shape, self.inner.id, self.inner.requires_grad
        )
    }
}

/// Integer label map (n,h,w) for segmentation targets and predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<i32>,
}

impl LabelMap {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != n * h * w {
            return Err(Error::usage(format!(
                "label data length {} does not match ({},{},{})",
                data.len(),
                n,
                h,
                w
            )));
        }
        Ok(LabelMap { n, h, w, data })
    }

    pub fn filled(n: usize, h: usize, w: usize, v: i32) -> Self {
        LabelMap {
            n,
            h,
            w,
            data: vec![v; n * h * w],
        }
    }

    #[inline(always)]
    pub fn idx(&self, n: usize, h: usize, w: usize) -> usize {
        (n * self.h + h) * self.w + w
    }

    pub fn get(&self, n: usize, h: usize, w: usize) -> i32 {
        self.data[self.idx(n, h, w)]
    }
}
