//! Register-machine interface for the routing computations.
//!
//! Every solver computation — path costs, one step of the route-choice
//! dynamics, leader objectives — is written once as a *program*: a function
//! generic over [`VecExec`] that requests vector operations and receives
//! register handles. Two executors run these programs:
//!
//! * [`Workspace`]: evaluates immediately into reusable buffers (the live
//!   dynamics loop);
//! * [`crate::unroll::UnrollTape`]: evaluates *and* records every operation
//!   for reverse-mode differentiation.
//!
//! Both call the same kernels in [`crate::sparse`], so a recorded forward
//! pass is bit-identical to the live one.
//!
//! Handles are plain `usize` values owned by the executor that produced them;
//! [`Workspace::reset`] invalidates all non-constant handles. Constants are
//! deduplicated by a `(name, index)` key so that programs re-run every
//! iteration do not re-copy their coefficient vectors. Operations panic on
//! shape mismatches: programs are internal, so a bad shape is a bug, not an
//! input error.

use std::collections::HashMap;
use std::sync::Arc;

use crate::sparse::{self, Incidence};

/// The operation set shared by the live and the recording executor.
///
/// `od_shift_max` subtracts each contiguous group's maximum (groups given by
/// a pointer array, `ptr[g]..ptr[g+1]`): the overflow guard applied to logit
/// arguments. The shift is treated as detached from the inputs — its adjoint
/// is the identity — which is exact for the normalized dynamics because the
/// downstream softmax-style ratio is invariant to per-group shifts.
pub trait VecExec {
    /// Non-differentiable constant, deduplicated by `(name, idx)`. Repeated
    /// calls with the same key must pass the same data and return the same
    /// handle.
    fn cons(&mut self, name: &'static str, idx: usize, data: &[f64]) -> usize;
    /// Differentiable leaf.
    fn input(&mut self, data: &[f64]) -> usize;
    /// `a ∘ b`.
    fn mul(&mut self, a: usize, b: usize) -> usize;
    /// `a + b`.
    fn add(&mut self, a: usize, b: usize) -> usize;
    /// `k·a`.
    fn scale(&mut self, k: f64, a: usize) -> usize;
    /// `k + a`.
    fn add_scalar(&mut self, k: f64, a: usize) -> usize;
    /// `exp(a)` elementwise.
    fn exp(&mut self, a: usize) -> usize;
    /// `a / b` elementwise.
    fn div(&mut self, a: usize, b: usize) -> usize;
    /// `a / b` elementwise with `0` where `b == 0` (continuous extension for
    /// flow shares; the extension's partials are also 0).
    fn safe_div(&mut self, a: usize, b: usize) -> usize;
    /// `a^k` elementwise for integer `k`.
    fn powi(&mut self, a: usize, k: i32) -> usize;
    /// `M·a`.
    fn spmv(&mut self, m: &Arc<Incidence>, a: usize) -> usize;
    /// `Mᵀ·a`.
    fn spmv_t(&mut self, m: &Arc<Incidence>, a: usize) -> usize;
    /// `⟨a, b⟩` as a length-1 register.
    fn dot(&mut self, a: usize, b: usize) -> usize;
    /// Per-group max subtraction (see trait docs).
    fn od_shift_max(&mut self, ptr: &Arc<Vec<usize>>, a: usize) -> usize;
    /// Copy of `a[lo..hi]`.
    fn slice(&mut self, a: usize, lo: usize, hi: usize) -> usize;
    /// Current value of a register.
    fn value(&self, r: usize) -> &[f64];
}

/// Handle bit marking a constant register in [`Workspace`].
const CONST_BIT: usize = 1 << (usize::BITS - 1);

/// Immediate executor with buffer reuse.
///
/// Computed registers live until [`Workspace::reset`], which recycles their
/// buffers; constant registers survive resets. A dynamics loop calls `reset`
/// once per iteration, so memory stays bounded regardless of the iteration
/// count.
#[derive(Debug, Default)]
pub struct Workspace {
    consts: Vec<Vec<f64>>,
    const_map: HashMap<(&'static str, usize), usize>,
    regs: Vec<Vec<f64>>,
    pool: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Recycle all computed registers; constant handles stay valid.
    pub fn reset(&mut self) {
        self.pool.append(&mut self.regs);
    }

    fn get(&self, r: usize) -> &[f64] {
        if r & CONST_BIT != 0 {
            &self.consts[r & !CONST_BIT]
        } else {
            &self.regs[r]
        }
    }

    fn take_buf(&mut self, len: usize) -> Vec<f64> {
        match self.pool.pop() {
            Some(mut b) => {
                b.clear();
                b.resize(len, 0.0);
                b
            }
            None => vec![0.0; len],
        }
    }

    fn push(&mut self, buf: Vec<f64>) -> usize {
        self.regs.push(buf);
        self.regs.len() - 1
    }

    fn unary(&mut self, a: usize, f: impl Fn(&[f64], &mut [f64])) -> usize {
        let mut out = self.take_buf(self.get(a).len());
        f(self.get(a), &mut out);
        self.push(out)
    }

    fn binary(&mut self, a: usize, b: usize, f: impl Fn(&[f64], &[f64], &mut [f64])) -> usize {
        let (la, lb) = (self.get(a).len(), self.get(b).len());
        assert_eq!(la, lb, "workspace: elementwise op on lengths {la} and {lb}");
        let mut out = self.take_buf(la);
        f(self.get(a), self.get(b), &mut out);
        self.push(out)
    }
}

impl VecExec for Workspace {
    fn cons(&mut self, name: &'static str, idx: usize, data: &[f64]) -> usize {
        if let Some(&r) = self.const_map.get(&(name, idx)) {
            debug_assert_eq!(self.consts[r & !CONST_BIT], data, "constant {name}[{idx}] changed");
            return r;
        }
        self.consts.push(data.to_vec());
        let r = (self.consts.len() - 1) | CONST_BIT;
        self.const_map.insert((name, idx), r);
        r
    }

    fn input(&mut self, data: &[f64]) -> usize {
        let mut out = self.take_buf(data.len());
        out.copy_from_slice(data);
        self.push(out)
    }

    fn mul(&mut self, a: usize, b: usize) -> usize {
        self.binary(a, b, sparse::ew_mul)
    }

    fn add(&mut self, a: usize, b: usize) -> usize {
        self.binary(a, b, sparse::ew_add)
    }

    fn scale(&mut self, k: f64, a: usize) -> usize {
        self.unary(a, |a, out| sparse::ew_scale(k, a, out))
    }

    fn add_scalar(&mut self, k: f64, a: usize) -> usize {
        self.unary(a, |a, out| sparse::ew_add_scalar(k, a, out))
    }

    fn exp(&mut self, a: usize) -> usize {
        self.unary(a, sparse::ew_exp)
    }

    fn div(&mut self, a: usize, b: usize) -> usize {
        self.binary(a, b, sparse::ew_div)
    }

    fn safe_div(&mut self, a: usize, b: usize) -> usize {
        self.binary(a, b, sparse::ew_safe_div)
    }

    fn powi(&mut self, a: usize, k: i32) -> usize {
        self.unary(a, |a, out| sparse::ew_powi(a, k, out))
    }

    fn spmv(&mut self, m: &Arc<Incidence>, a: usize) -> usize {
        assert_eq!(self.get(a).len(), m.ncols(), "workspace: spmv input length");
        let mut out = self.take_buf(m.nrows());
        sparse::spmv(m, self.get(a), &mut out);
        self.push(out)
    }

    fn spmv_t(&mut self, m: &Arc<Incidence>, a: usize) -> usize {
        assert_eq!(self.get(a).len(), m.nrows(), "workspace: spmv_t input length");
        let mut out = self.take_buf(m.ncols());
        sparse::spmv_t(m, self.get(a), &mut out);
        self.push(out)
    }

    fn dot(&mut self, a: usize, b: usize) -> usize {
        let (la, lb) = (self.get(a).len(), self.get(b).len());
        assert_eq!(la, lb, "workspace: dot on lengths {la} and {lb}");
        let v = sparse::dot(self.get(a), self.get(b));
        let mut out = self.take_buf(1);
        out[0] = v;
        self.push(out)
    }

    fn od_shift_max(&mut self, ptr: &Arc<Vec<usize>>, a: usize) -> usize {
        let n = self.get(a).len();
        assert_eq!(*ptr.last().unwrap(), n, "workspace: group pointer end");
        let mut out = self.take_buf(n);
        sparse::group_shift_max(ptr, self.get(a), &mut out);
        self.push(out)
    }

    fn slice(&mut self, a: usize, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi && hi <= self.get(a).len(), "workspace: slice bounds");
        let mut out = self.take_buf(hi - lo);
        out.copy_from_slice(&self.get(a)[lo..hi]);
        self.push(out)
    }

    fn value(&self, r: usize) -> &[f64] {
        self.get(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_deduplicated_and_survive_reset() {
        let mut ws = Workspace::new();
        let a = ws.cons("a", 0, &[1.0, 2.0]);
        let a2 = ws.cons("a", 0, &[1.0, 2.0]);
        assert_eq!(a, a2);
        let x = ws.input(&[3.0, 4.0]);
        let y = ws.mul(a, x);
        assert_eq!(ws.value(y), &[3.0, 8.0]);
        ws.reset();
        assert_eq!(ws.value(a), &[1.0, 2.0]);
        let x = ws.input(&[1.0, 1.0]);
        let y = ws.add(a, x);
        assert_eq!(ws.value(y), &[2.0, 3.0]);
    }

    #[test]
    fn buffers_are_recycled() {
        let mut ws = Workspace::new();
        for _ in 0..100 {
            ws.reset();
            let x = ws.input(&[1.0; 64]);
            let _ = ws.exp(x);
        }
        assert!(ws.pool.len() + ws.regs.len() <= 4, "pool grew: {}", ws.pool.len());
    }

    #[test]
    fn op_values_match_hand_results() {
        let mut ws = Workspace::new();
        let x = ws.input(&[1.0, -2.0]);
        let r = ws.scale(2.0, x);
        assert_eq!(ws.value(r), &[2.0, -4.0]);
        let r = ws.add_scalar(1.0, x);
        assert_eq!(ws.value(r), &[2.0, -1.0]);
        let r = ws.powi(x, 3);
        assert_eq!(ws.value(r), &[1.0, -8.0]);
        let y = ws.input(&[0.5, 0.0]);
        let r = ws.safe_div(x, y);
        assert_eq!(ws.value(r), &[2.0, 0.0]);
        let d = ws.dot(x, x);
        assert_eq!(ws.value(d), &[5.0]);
        let s = ws.slice(x, 1, 2);
        assert_eq!(ws.value(s), &[-2.0]);
    }

    #[test]
    fn od_shift_max_subtracts_group_maxima() {
        let mut ws = Workspace::new();
        let ptr = Arc::new(vec![0usize, 2, 5]);
        let x = ws.input(&[1.0, 3.0, -1.0, 2.0, 0.0]);
        let y = ws.od_shift_max(&ptr, x);
        assert_eq!(ws.value(y), &[-2.0, 0.0, -3.0, 0.0, -2.0]);
    }

    #[test]
    fn spmv_roundtrip() {
        let m = Arc::new(
            Incidence::from_columns(3, &[vec![0, 2], vec![1]]).unwrap(),
        );
        let mut ws = Workspace::new();
        let v = ws.input(&[2.0, 5.0]);
        let mv = ws.spmv(&m, v);
        assert_eq!(ws.value(mv), &[2.0, 5.0, 2.0]);
        let u = ws.input(&[1.0, 10.0, 100.0]);
        let mtu = ws.spmv_t(&m, u);
        assert_eq!(ws.value(mtu), &[101.0, 10.0]);
    }

    #[test]
    #[should_panic(expected = "elementwise op on lengths")]
    fn shape_mismatch_panics() {
        let mut ws = Workspace::new();
        let a = ws.input(&[1.0]);
        let b = ws.input(&[1.0, 2.0]);
        ws.mul(a, b);
    }
}
