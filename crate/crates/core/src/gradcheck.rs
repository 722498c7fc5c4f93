//! Central finite-difference gradient oracle.
//!
//! Deliberately independent of the tape: it only ever calls a user-supplied
//! forward closure and perturbs raw tensor data, so it can arbitrate whether
//! reverse-mode gradients are right.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central differences `(f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps)` for every
/// coordinate of `x`. `f` must be deterministic. The perturbation happens in
/// place through `data_mut`, and the original value is restored afterwards.
pub fn finite_diff_grad<S: Scalar>(
    f: &mut dyn FnMut(&Tensor<S>) -> S,
    x: &Tensor<S>,
    eps: f64,
) -> Vec<S> {
    let eps_s = S::from_f64c(eps);
    let n = x.numel();
    let mut grad = vec![S::zero(); n];
    for i in 0..n {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps_s;
        let fp = f(x);
        x.data_mut()[i] = orig - eps_s;
        let fm = f(x);
        x.data_mut()[i] = orig;
        grad[i] = (fp - fm) / (eps_s + eps_s);
    }
    grad
}

/// Central differences for a sampled subset of coordinates. Returns
/// `(index, derivative)` pairs.
pub fn finite_diff_grad_sampled<S: Scalar>(
    f: &mut dyn FnMut(&Tensor<S>) -> S,
    x: &Tensor<S>,
    eps: f64,
    indices: &[usize],
) -> Vec<(usize, S)> {
    let eps_s = S::from_f64c(eps);
    indices
        .iter()
        .map(|&i| {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + eps_s;
            let fp = f(x);
            x.data_mut()[i] = orig - eps_s;
            let fm = f(x);
            x.data_mut()[i] = orig;
            (i, (fp - fm) / (eps_s + eps_s))
        })
        .collect()
}

/// Relative error with an absolute floor so that near-zero pairs compare
/// sanely: `|a-b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Outcome of comparing analytic and numeric gradients over one tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst_rel_err: f64,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_rel_err <= tol
    }
}

/// Compare an analytic gradient against central differences of `f` at `x`.
pub fn compare_grads<S: Scalar>(
    analytic: &[S],
    f: &mut dyn FnMut(&Tensor<S>) -> S,
    x: &Tensor<S>,
    eps: f64,
) -> GradCheckReport {
    let numeric = finite_diff_grad(f, x, eps);
    let mut worst = 0.0;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        let e = rel_err(a.to_f64c(), n.to_f64c(), 1e-3);
        if e > worst {
            worst = e;
            worst_index = i;
        }
    }
    GradCheckReport {
        checked: analytic.len(),
        worst_rel_err: worst,
        worst_index,
    }
}
