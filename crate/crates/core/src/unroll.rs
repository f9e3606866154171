//! Reverse-mode differentiation through the unrolled route-choice dynamics.
//!
//! [`UnrollTape`] is a [`VecExec`] executor that evaluates a program *and*
//! records it: every operation stores its inputs, output value, and enough
//! structure to run the adjoint sweep. Recording `T` dynamics layers followed
//! by a leader objective gives a computation graph whose [`backward`] pass
//! returns the exact gradient of the objective with respect to the leader
//! decision `z` and the initial route distribution `p⁰`.
//!
//! # Operation accounting
//!
//! The tape keeps canonical operation counts for the forward and adjoint
//! sweeps. Elementwise operations cost their vector length, sparse products
//! cost the number of nonzeros, and inner products cost the vector length.
//! Structural operations are free: adds propagate adjoints by pure
//! accumulation, slices scatter, and the per-OD max subtraction used as an
//! overflow guard is detached (identity adjoint) and charged zero — it is
//! exact because the downstream normalized ratio is invariant to per-group
//! shifts. On the adjoint side a division charges its numerator input `n` and
//! its denominator input `2n` (the extra factor covers the `−ō∘out/b` term),
//! and an integer power charges `3n`. With this accounting a `T`-layer
//! forward/adjoint pair over `|𝕂|` paths, `|𝔸|` links, and `nnz(Λ)` stored
//! incidences costs
//!
//! ```text
//! FP = (7T+1)·|𝕂| + (4T+3)·|𝔸| + (2T+1)·nnz(Λ)
//! BP = (10T+1)·|𝕂| + (2T+3)·|𝔸| + (2T+1)·nnz(Λ)
//! ```
//!
//! for the toll-setting problem with affine costs, and BP/FP stays below 4/3
//! for every network (differentiation is never more than a third dearer than
//! simulation).
//!
//! Tape memory grows linearly in `T`: constants are deduplicated, so each
//! layer adds only its computed registers. [`UnrollTape::allocated_elems`]
//! exposes the running total so the linearity is testable.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::gap_absolute;
use crate::exec::VecExec;
use crate::sparse::{self, Incidence};

/// One recorded operation; the variant index `i` is also its output register.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Mul(usize, usize),
    Add(usize, usize),
    Scale(f64, usize),
    AddScalar(usize),
    Exp(usize),
    Div(usize, usize),
    SafeDiv(usize, usize),
    Powi(usize, i32),
    SpMv(Arc<Incidence>, usize),
    SpMvT(Arc<Incidence>, usize),
    Dot(usize, usize),
    OdShiftMax(usize),
    Slice(usize, usize),
}

/// Restore point for [`UnrollTape::truncate`].
#[derive(Debug, Clone, Copy)]
pub struct TapeMark {
    regs: usize,
    fwd_ops: usize,
    allocated_elems: usize,
}

/// Recording executor: a linear tape of vector registers.
#[derive(Debug, Default)]
pub struct UnrollTape {
    vals: Vec<Vec<f64>>,
    ops: Vec<Op>,
    diff: Vec<bool>,
    const_map: HashMap<(&'static str, usize), usize>,
    fwd_ops: usize,
    bwd_ops: usize,
    allocated_elems: usize,
}

impl UnrollTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonical operations charged to the forward sweep so far.
    pub fn fwd_ops(&self) -> usize {
        self.fwd_ops
    }

    /// Canonical operations charged to the most recent adjoint sweep.
    pub fn bwd_ops(&self) -> usize {
        self.bwd_ops
    }

    /// Total `f64` elements allocated by recorded registers.
    pub fn allocated_elems(&self) -> usize {
        self.allocated_elems
    }

    /// Number of registers on the tape.
    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Restore point for [`UnrollTape::truncate`].
    pub fn mark(&self) -> TapeMark {
        TapeMark {
            regs: self.vals.len(),
            fwd_ops: self.fwd_ops,
            allocated_elems: self.allocated_elems,
        }
    }

    /// Discard every register recorded after `mark` (used to drop a dynamics
    /// layer that turned out to be past the stopping test).
    pub fn truncate(&mut self, mark: TapeMark) {
        self.vals.truncate(mark.regs);
        self.ops.truncate(mark.regs);
        self.diff.truncate(mark.regs);
        self.const_map.retain(|_, r| *r < mark.regs);
        self.fwd_ops = mark.fwd_ops;
        self.allocated_elems = mark.allocated_elems;
    }

    fn push(&mut self, val: Vec<f64>, op: Op, diff: bool, charge: usize) -> usize {
        self.allocated_elems += val.len();
        self.fwd_ops += charge;
        self.vals.push(val);
        self.ops.push(op);
        self.diff.push(diff);
        self.vals.len() - 1
    }

    /// Adjoint sweep seeded with ones at `seed` (scalar objectives have
    /// length 1). Returns the adjoints of every register that influences the
    /// seed; registers off the differentiable path have none.
    pub fn backward_from(&mut self, seed: usize) -> Adjoints {
        self.bwd_ops = 0;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.vals.len()];
        adj[seed] = Some(vec![1.0; self.vals[seed].len()]);

        for i in (0..=seed).rev() {
            if !self.diff[i] || adj[i].is_none() {
                continue;
            }
            let obar = adj[i].take().unwrap();
            let op = self.ops[i].clone();
            match op {
                Op::Leaf => {}
                Op::Mul(a, b) => {
                    if self.diff[a] {
                        let vb = &self.vals[b];
                        for (t, (o, v)) in acc(&mut adj, a, vb.len()).iter_mut().zip(obar.iter().zip(vb)) {
                            *t += o * v;
                        }
                        self.bwd_ops += obar.len();
                    }
                    if self.diff[b] {
                        let va = &self.vals[a];
                        for (t, (o, v)) in acc(&mut adj, b, va.len()).iter_mut().zip(obar.iter().zip(va)) {
                            *t += o * v;
                        }
                        self.bwd_ops += obar.len();
                    }
                }
                Op::Add(a, b) => {
                    if self.diff[a] {
                        for (t, o) in acc(&mut adj, a, obar.len()).iter_mut().zip(&obar) {
                            *t += o;
                        }
                    }
                    if self.diff[b] {
                        for (t, o) in acc(&mut adj, b, obar.len()).iter_mut().zip(&obar) {
                            *t += o;
                        }
                    }
                }
                Op::Scale(k, a) => {
                    if self.diff[a] {
                        for (t, o) in acc(&mut adj, a, obar.len()).iter_mut().zip(&obar) {
                            *t += k * o;
                        }
                        self.bwd_ops += obar.len();
                    }
                }
                Op::AddScalar(a) => {
                    if self.diff[a] {
                        for (t, o) in acc(&mut adj, a, obar.len()).iter_mut().zip(&obar) {
                            *t += o;
                        }
                    }
                }
                Op::Exp(a) => {
                    if self.diff[a] {
                        let out = &self.vals[i];
                        for (t, (o, e)) in acc(&mut adj, a, obar.len()).iter_mut().zip(obar.iter().zip(out)) {
                            *t += o * e;
                        }
                        self.bwd_ops += obar.len();
                    }
                }
                Op::Div(a, b) | Op::SafeDiv(a, b) => {
                    let masked = matches!(self.ops[i], Op::SafeDiv(..));
                    if self.diff[a] {
                        let vb = &self.vals[b];
                        for (j, t) in acc(&mut adj, a, obar.len()).iter_mut().enumerate() {
                            if masked && vb[j] == 0.0 {
                                continue;
                            }
                            *t += obar[j] / vb[j];
                        }
                        self.bwd_ops += obar.len();
                    }
                    if self.diff[b] {
                        let out = &self.vals[i];
                        let vb = &self.vals[b];
                        for (j, t) in acc(&mut adj, b, obar.len()).iter_mut().enumerate() {
                            if masked && vb[j] == 0.0 {
                                continue;
                            }
                            *t -= obar[j] * out[j] / vb[j];
                        }
                        self.bwd_ops += 2 * obar.len();
                    }
                }
                Op::Powi(a, k) => {
                    if self.diff[a] {
                        let va = &self.vals[a];
                        for (j, t) in acc(&mut adj, a, obar.len()).iter_mut().enumerate() {
                            *t += f64::from(k) * va[j].powi(k - 1) * obar[j];
                        }
                        self.bwd_ops += 3 * obar.len();
                    }
                }
                Op::SpMv(m, a) => {
                    if self.diff[a] {
                        let mut tmp = vec![0.0; m.ncols()];
                        sparse::spmv_t(&m, &obar, &mut tmp);
                        for (t, v) in acc(&mut adj, a, tmp.len()).iter_mut().zip(&tmp) {
                            *t += v;
                        }
                        self.bwd_ops += m.nnz();
                    }
                }
                Op::SpMvT(m, a) => {
                    if self.diff[a] {
                        let mut tmp = vec![0.0; m.nrows()];
                        sparse::spmv(&m, &obar, &mut tmp);
                        for (t, v) in acc(&mut adj, a, tmp.len()).iter_mut().zip(&tmp) {
                            *t += v;
                        }
                        self.bwd_ops += m.nnz();
                    }
                }
                Op::Dot(a, b) => {
                    let s = obar[0];
                    if self.diff[a] {
                        let vb = &self.vals[b];
                        for (t, v) in acc(&mut adj, a, vb.len()).iter_mut().zip(vb) {
                            *t += s * v;
                        }
                        self.bwd_ops += vb.len();
                    }
                    if self.diff[b] {
                        let va = &self.vals[a];
                        for (t, v) in acc(&mut adj, b, va.len()).iter_mut().zip(va) {
                            *t += s * v;
                        }
                        self.bwd_ops += va.len();
                    }
                }
                Op::OdShiftMax(a) => {
                    if self.diff[a] {
                        for (t, o) in acc(&mut adj, a, obar.len()).iter_mut().zip(&obar) {
                            *t += o;
                        }
                    }
                }
                Op::Slice(a, lo) => {
                    if self.diff[a] {
                        let n = self.vals[a].len();
                        for (t, o) in acc(&mut adj, a, n)[lo..lo + obar.len()].iter_mut().zip(&obar) {
                            *t += o;
                        }
                    }
                }
            }
            adj[i] = Some(obar);
        }
        Adjoints { adj }
    }
}

/// Lazily create the adjoint buffer of register `r`.
fn acc(adj: &mut [Option<Vec<f64>>], r: usize, len: usize) -> &mut [f64] {
    adj[r].get_or_insert_with(|| vec![0.0; len])
}

/// Adjoints produced by [`UnrollTape::backward_from`].
#[derive(Debug)]
pub struct Adjoints {
    adj: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Adjoint of register `r`, if it influences the seed.
    pub fn of(&self, r: usize) -> Option<&[f64]> {
        self.adj[r].as_deref()
    }

    /// Adjoint of register `r`, or zeros when the seed does not depend on it
    /// (a `T = 0` lookahead makes some leaders' objectives independent of
    /// their own decision).
    pub fn of_or_zeros(&self, r: usize, len: usize) -> Vec<f64> {
        match self.adj[r].as_deref() {
            Some(v) => v.to_vec(),
            None => vec![0.0; len],
        }
    }
}

impl VecExec for UnrollTape {
    fn cons(&mut self, name: &'static str, idx: usize, data: &[f64]) -> usize {
        if let Some(&r) = self.const_map.get(&(name, idx)) {
            debug_assert_eq!(self.vals[r], data, "constant {name}[{idx}] changed");
            return r;
        }
        let r = self.push(data.to_vec(), Op::Leaf, false, 0);
        self.const_map.insert((name, idx), r);
        r
    }

    fn input(&mut self, data: &[f64]) -> usize {
        self.push(data.to_vec(), Op::Leaf, true, 0)
    }

    fn mul(&mut self, a: usize, b: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(n, self.vals[b].len(), "tape: elementwise op length mismatch");
        let mut out = vec![0.0; n];
        sparse::ew_mul(&self.vals[a], &self.vals[b], &mut out);
        self.push(out, Op::Mul(a, b), self.diff[a] || self.diff[b], n)
    }

    fn add(&mut self, a: usize, b: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(n, self.vals[b].len(), "tape: elementwise op length mismatch");
        let mut out = vec![0.0; n];
        sparse::ew_add(&self.vals[a], &self.vals[b], &mut out);
        self.push(out, Op::Add(a, b), self.diff[a] || self.diff[b], n)
    }

    fn scale(&mut self, k: f64, a: usize) -> usize {
        let n = self.vals[a].len();
        let mut out = vec![0.0; n];
        sparse::ew_scale(k, &self.vals[a], &mut out);
        self.push(out, Op::Scale(k, a), self.diff[a], n)
    }

    fn add_scalar(&mut self, k: f64, a: usize) -> usize {
        let n = self.vals[a].len();
        let mut out = vec![0.0; n];
        sparse::ew_add_scalar(k, &self.vals[a], &mut out);
        self.push(out, Op::AddScalar(a), self.diff[a], n)
    }

    fn exp(&mut self, a: usize) -> usize {
        let n = self.vals[a].len();
        let mut out = vec![0.0; n];
        sparse::ew_exp(&self.vals[a], &mut out);
        self.push(out, Op::Exp(a), self.diff[a], n)
    }

    fn div(&mut self, a: usize, b: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(n, self.vals[b].len(), "tape: elementwise op length mismatch");
        let mut out = vec![0.0; n];
        sparse::ew_div(&self.vals[a], &self.vals[b], &mut out);
        self.push(out, Op::Div(a, b), self.diff[a] || self.diff[b], n)
    }

    fn safe_div(&mut self, a: usize, b: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(n, self.vals[b].len(), "tape: elementwise op length mismatch");
        let mut out = vec![0.0; n];
        sparse::ew_safe_div(&self.vals[a], &self.vals[b], &mut out);
        self.push(out, Op::SafeDiv(a, b), self.diff[a] || self.diff[b], n)
    }

    fn powi(&mut self, a: usize, k: i32) -> usize {
        let n = self.vals[a].len();
        let mut out = vec![0.0; n];
        sparse::ew_powi(&self.vals[a], k, &mut out);
        self.push(out, Op::Powi(a, k), self.diff[a], n)
    }

    fn spmv(&mut self, m: &Arc<Incidence>, a: usize) -> usize {
        assert_eq!(self.vals[a].len(), m.ncols(), "tape: spmv input length");
        let mut out = vec![0.0; m.nrows()];
        sparse::spmv(m, &self.vals[a], &mut out);
        let charge = m.nnz();
        self.push(out, Op::SpMv(Arc::clone(m), a), self.diff[a], charge)
    }

    fn spmv_t(&mut self, m: &Arc<Incidence>, a: usize) -> usize {
        assert_eq!(self.vals[a].len(), m.nrows(), "tape: spmv_t input length");
        let mut out = vec![0.0; m.ncols()];
        sparse::spmv_t(m, &self.vals[a], &mut out);
        let charge = m.nnz();
        self.push(out, Op::SpMvT(Arc::clone(m), a), self.diff[a], charge)
    }

    fn dot(&mut self, a: usize, b: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(n, self.vals[b].len(), "tape: dot length mismatch");
        let out = vec![sparse::dot(&self.vals[a], &self.vals[b])];
        self.push(out, Op::Dot(a, b), self.diff[a] || self.diff[b], n)
    }

    fn od_shift_max(&mut self, ptr: &Arc<Vec<usize>>, a: usize) -> usize {
        let n = self.vals[a].len();
        assert_eq!(*ptr.last().unwrap(), n, "tape: group pointer end");
        let mut out = vec![0.0; n];
        sparse::group_shift_max(ptr, &self.vals[a], &mut out);
        self.push(out, Op::OdShiftMax(a), self.diff[a], 0)
    }

    fn slice(&mut self, a: usize, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi && hi <= self.vals[a].len(), "tape: slice bounds");
        let out = self.vals[a][lo..hi].to_vec();
        self.push(out, Op::Slice(a, lo), self.diff[a], 0)
    }

    fn value(&self, r: usize) -> &[f64] {
        &self.vals[r]
    }
}

/// A leader problem whose follower dynamics unroll layer by layer.
///
/// Programs are generic over the executor so the live dynamics loop and the
/// recorded one run literally the same code (see [`crate::exec`]).
pub trait UnrolledModel {
    /// Number of traveler classes.
    fn n_classes(&self) -> usize;
    /// Group boundaries of the per-class route distribution (paths of OD `w`
    /// are `od_ptr[w]..od_ptr[w+1]`).
    fn od_ptr(&self) -> &[usize];
    /// Per-path demand carried by `class`.
    fn path_demand(&self, class: usize) -> &[f64];
    /// Record one dynamics step `p → p⁺` at decision `z`; also returns the
    /// path-cost registers the step was computed from (for gap evaluation).
    fn layer<E: VecExec>(&self, e: &mut E, p: &[usize], z: usize) -> LayerOut;
    /// Record the leader objective at `(p, z)` as a length-1 register.
    fn objective<E: VecExec>(&self, e: &mut E, p: &[usize], z: usize) -> usize;
}

/// Registers produced by one recorded dynamics layer.
pub struct LayerOut {
    /// Updated per-class route distributions.
    pub p_next: Vec<usize>,
    /// Per-class path costs at the layer's *input* distribution.
    pub costs: Vec<usize>,
}

/// A recorded forward pass: `T` dynamics layers and the objective.
#[derive(Debug)]
pub struct Recording {
    pub tape: UnrollTape,
    /// Leaf registers of the initial per-class route distributions.
    pub p0: Vec<usize>,
    /// Leaf register of the leader decision.
    pub z: usize,
    /// Registers of the final per-class route distributions.
    pub p_final: Vec<usize>,
    /// Length-1 register of the leader objective.
    pub objective: usize,
    /// Number of recorded layers.
    pub t_depth: usize,
    /// Whether the adaptive recorder met its gap tolerance (fixed-depth
    /// recordings report `true`).
    pub converged: bool,
    /// Last equilibrium gap checked by the adaptive recorder (`NaN` for
    /// fixed-depth recordings).
    pub final_gap: f64,
}

impl Recording {
    /// Final per-class route distributions as plain vectors.
    pub fn p_final_values(&self) -> Vec<Vec<f64>> {
        self.p_final.iter().map(|&r| self.tape.value(r).to_vec()).collect()
    }

    /// Objective value.
    pub fn objective_value(&self) -> f64 {
        self.tape.value(self.objective)[0]
    }
}

/// Record exactly `t` dynamics layers from `p0` at decision `z`, then the
/// objective at the final distribution.
pub fn forward_record<M: UnrolledModel>(
    model: &M,
    p0: &[Vec<f64>],
    z: &[f64],
    t: usize,
) -> Recording {
    let mut tape = UnrollTape::new();
    let zr = tape.input(z);
    let p0_regs: Vec<usize> = p0.iter().map(|v| tape.input(v)).collect();
    let mut p = p0_regs.clone();
    for _ in 0..t {
        p = model.layer(&mut tape, &p, zr).p_next;
    }
    let objective = model.objective(&mut tape, &p, zr);
    Recording {
        tape,
        p0: p0_regs,
        z: zr,
        p_final: p,
        objective,
        t_depth: t,
        converged: true,
        final_gap: f64::NAN,
    }
}

/// Record dynamics layers until the absolute equilibrium gap at the current
/// iterate drops to `eps` (checked *before* each step; the step past the test
/// is discarded), or until `t_max` layers.
///
/// The returned recording holds exactly `t_depth` layers with the objective
/// at `p^{t_depth}`; `converged` reports whether the gap test was met.
pub fn forward_record_adaptive<M: UnrolledModel>(
    model: &M,
    p0: &[Vec<f64>],
    z: &[f64],
    eps: f64,
    t_max: usize,
) -> Recording {
    let mut tape = UnrollTape::new();
    let zr = tape.input(z);
    let p0_regs: Vec<usize> = p0.iter().map(|v| tape.input(v)).collect();
    let mut p = p0_regs.clone();
    let mut t_depth = t_max;
    let mut converged = false;
    let mut final_gap = f64::NAN;
    for t in 0..t_max {
        let mark = tape.mark();
        let out = model.layer(&mut tape, &p, zr);
        let mut gap = 0.0;
        for m in 0..model.n_classes() {
            gap += gap_absolute(
                model.od_ptr(),
                model.path_demand(m),
                tape.value(out.costs[m]),
                tape.value(p[m]),
            );
        }
        final_gap = gap;
        if gap <= eps {
            tape.truncate(mark);
            t_depth = t;
            converged = true;
            break;
        }
        p = out.p_next;
    }
    let objective = model.objective(&mut tape, &p, zr);
    Recording {
        tape,
        p0: p0_regs,
        z: zr,
        p_final: p,
        objective,
        t_depth,
        converged,
        final_gap,
    }
}

/// Gradient of a recorded objective with respect to the leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientResult {
    /// Objective value at the recorded point.
    pub value: f64,
    /// `∂objective/∂z`; zero where the recorded graph does not reach `z`.
    pub l_z: Vec<f64>,
    /// `∂objective/∂p⁰` per class.
    pub l_p0: Vec<Vec<f64>>,
}

/// Run the adjoint sweep of a recording.
pub fn backward(rec: &mut Recording) -> GradientResult {
    let value = rec.tape.value(rec.objective)[0];
    let z_len = rec.tape.value(rec.z).len();
    let p0_lens: Vec<usize> = rec.p0.iter().map(|&r| rec.tape.value(r).len()).collect();
    let adj = rec.tape.backward_from(rec.objective);
    GradientResult {
        value,
        l_z: adj.of_or_zeros(rec.z, z_len),
        l_p0: rec
            .p0
            .iter()
            .zip(&p0_lens)
            .map(|(&r, &n)| adj.of_or_zeros(r, n))
            .collect(),
    }
}

/// Central-difference gradient of `f` at `x` with step `h`, the independent
/// cross-check for [`backward`].
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Operation-count summary of one recorded forward/adjoint pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    #[serde(rename = "T")]
    pub t: usize,
    pub fwd_ops: usize,
    pub bwd_ops: usize,
    /// `bwd_ops / fwd_ops`.
    pub ratio: f64,
    /// Max absolute difference between the adjoint gradient and the
    /// finite-difference cross-check, when one was run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_max_abs_err: Option<f64>,
}

/// Summarize a recording's operation counts (run [`backward`] first so the
/// adjoint count is populated).
pub fn count_report(rec: &Recording, grad_max_abs_err: Option<f64>) -> CountReport {
    let fwd = rec.tape.fwd_ops();
    let bwd = rec.tape.bwd_ops();
    CountReport {
        t: rec.t_depth,
        fwd_ops: fwd,
        bwd_ops: bwd,
        ratio: bwd as f64 / fwd as f64,
        grad_max_abs_err,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Workspace;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn quadratic_gradient_matches_hand_and_fd() {
        // J = ⟨a∘x, x⟩, dJ/dx = 2a∘x.
        let a = [2.0, 3.0, 0.5];
        let x = [1.0, -1.0, 4.0];
        let run = |xv: &[f64]| {
            let mut tape = UnrollTape::new();
            let xr = tape.input(xv);
            let ar = tape.cons("a", 0, &a);
            let ax = tape.mul(ar, xr);
            let j = tape.dot(ax, xr);
            (tape, xr, j)
        };
        let (mut tape, xr, j) = run(&x);
        let adj = tape.backward_from(j);
        let grad = adj.of(xr).unwrap();
        assert_close(grad, &[4.0, -6.0, 4.0], 1e-12);
        let fd = fd_gradient(|xv| {
            let (tape, _, j) = run(xv);
            tape.value(j)[0]
        }, &x, 1e-6);
        assert_close(grad, &fd, 1e-6);
    }

    #[test]
    fn shared_input_accumulates_both_adjoint_terms() {
        // J = ⟨x∘x, 1⟩: Mul sees the same register twice.
        let x = [1.5, -2.0];
        let mut tape = UnrollTape::new();
        let xr = tape.input(&x);
        let ones = tape.cons("ones", 0, &[1.0, 1.0]);
        let xx = tape.mul(xr, xr);
        let j = tape.dot(xx, ones);
        let adj = tape.backward_from(j);
        assert_close(adj.of(xr).unwrap(), &[3.0, -4.0], 1e-12);
        // Forward: mul 2 + dot 2; backward: mul charges each diff input, dot
        // charges only the differentiable side.
        assert_eq!(tape.fwd_ops(), 4);
        assert_eq!(tape.bwd_ops(), 2 + 2 + 2);
    }

    #[test]
    fn softmax_gradient_is_shift_invariant_and_matches_fd() {
        // p = exp(s − max)/Σexp(s − max), J = ⟨c, p⟩, one group.
        let c = [1.0, 2.0, -0.5];
        let s = [0.3, -0.2, 0.9];
        let ptr = Arc::new(vec![0usize, 3]);
        let sum_all = Arc::new(Incidence::from_columns(1, &[vec![0], vec![0], vec![0]]).unwrap());
        let run = |sv: &[f64], guard: bool| {
            let mut tape = UnrollTape::new();
            let sr = tape.input(sv);
            let cr = tape.cons("c", 0, &c);
            let shifted = if guard { tape.od_shift_max(&ptr, sr) } else { sr };
            let e = tape.exp(shifted);
            let tot = tape.spmv(&sum_all, e);
            let rep = tape.spmv_t(&sum_all, tot);
            let p = tape.div(e, rep);
            let j = tape.dot(cr, p);
            (tape, sr, j)
        };
        let (mut tape, sr, j) = run(&s, true);
        let adj = tape.backward_from(j);
        let guarded = adj.of(sr).unwrap().to_vec();
        let (mut tape, sr, j) = run(&s, false);
        let adj = tape.backward_from(j);
        let unguarded = adj.of(sr).unwrap().to_vec();
        // The detached max is exact for shift-invariant continuations.
        assert_close(&guarded, &unguarded, 1e-12);
        let fd = fd_gradient(
            |sv| {
                let (tape, _, j) = run(sv, true);
                tape.value(j)[0]
            },
            &s,
            1e-6,
        );
        assert_close(&guarded, &fd, 1e-6);
    }

    #[test]
    fn safe_div_has_zero_partials_at_zero_denominator() {
        let x = [2.0, 3.0];
        let y = [4.0, 0.0];
        let mut tape = UnrollTape::new();
        let xr = tape.input(&x);
        let yr = tape.input(&y);
        let ones = tape.cons("ones", 0, &[1.0, 1.0]);
        let q = tape.safe_div(xr, yr);
        let j = tape.dot(q, ones);
        let adj = tape.backward_from(j);
        assert_close(adj.of(xr).unwrap(), &[0.25, 0.0], 1e-12);
        assert_close(adj.of(yr).unwrap(), &[-2.0 / 16.0, 0.0], 1e-12);
    }

    #[test]
    fn slice_adjoint_scatters_back() {
        let z = [1.0, 2.0, 3.0, 4.0];
        let c1 = [10.0, 20.0];
        let c2 = [30.0, 40.0];
        let mut tape = UnrollTape::new();
        let zr = tape.input(&z);
        let c1r = tape.cons("c1", 0, &c1);
        let c2r = tape.cons("c2", 0, &c2);
        let z1 = tape.slice(zr, 0, 2);
        let z2 = tape.slice(zr, 2, 4);
        let j1 = tape.dot(c1r, z1);
        let j2 = tape.dot(c2r, z2);
        let j = tape.add(j1, j2);
        let adj = tape.backward_from(j);
        assert_close(adj.of(zr).unwrap(), &[10.0, 20.0, 30.0, 40.0], 1e-12);
    }

    #[test]
    fn div_charges_numerator_n_and_denominator_2n() {
        let mut tape = UnrollTape::new();
        let a = tape.input(&[1.0, 2.0]);
        let b = tape.input(&[3.0, 4.0]);
        let ones = tape.cons("ones", 0, &[1.0, 1.0]);
        let q = tape.div(a, b);
        let j = tape.dot(q, ones);
        tape.backward_from(j);
        // dot: 2 (q side only), div: 2 (numerator) + 4 (denominator).
        assert_eq!(tape.bwd_ops(), 2 + 2 + 4);
        assert_eq!(tape.fwd_ops(), 2 + 2);
    }

    #[test]
    fn truncate_restores_counters_and_values() {
        let mut tape = UnrollTape::new();
        let x = tape.input(&[1.0, 2.0]);
        let y = tape.exp(x);
        let mark = tape.mark();
        let fwd = tape.fwd_ops();
        let alloc = tape.allocated_elems();
        let z = tape.mul(y, y);
        let _ = tape.dot(z, y);
        tape.truncate(mark);
        assert_eq!(tape.len(), 2);
        assert_eq!(tape.fwd_ops(), fwd);
        assert_eq!(tape.allocated_elems(), alloc);
        // Recording continues cleanly after a truncation.
        let z2 = tape.mul(y, y);
        assert_eq!(tape.value(z2).len(), 2);
    }

    #[test]
    fn workspace_and_tape_agree_bit_for_bit() {
        fn prog<E: VecExec>(e: &mut E, x: &[f64]) -> usize {
            let xr = e.input(x);
            let c = e.cons("c", 0, &[0.25, 0.5, 0.125]);
            let s = e.scale(-1.5, xr);
            let sh = e.od_shift_max(&Arc::new(vec![0, 3]), s);
            let ex = e.exp(sh);
            let m = e.mul(ex, c);
            e.div(m, ex)
        }
        let x = [0.1, 0.7, -0.3];
        let mut ws = Workspace::new();
        let a = prog(&mut ws, &x);
        let mut tape = UnrollTape::new();
        let b = prog(&mut tape, &x);
        assert_eq!(ws.value(a), tape.value(b));
    }
}
