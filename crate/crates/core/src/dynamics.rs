//! Route-choice dynamics and equilibrium solvers.
//!
//! Travelers split each OD pair's demand over its routes according to a
//! distribution `p`. The imitative logit dynamics (ILD) update
//!
//! ```text
//! p⁺_k = p_k·exp(−r·c_k) / Σ_{k' ∈ same OD} p_{k'}·exp(−r·c_{k'})
//! ```
//!
//! is entropic mirror descent on the routing game's potential; its fixed
//! points with full support are Wardrop equilibria. Convergence is measured
//! by the absolute demand-weighted equilibrium gap
//!
//! ```text
//! δ(p) = −⟨c, q∘(p′ − p)⟩,   p′ = all-or-nothing assignment,
//! ```
//!
//! which is zero exactly at equilibrium; a relative per-class variant is
//! provided for multiclass reporting. Solvers test the gap *before* stepping,
//! so the state they return is the first iterate that met the tolerance.
//!
//! The step size `r` is safe below twice the inverse co-coercivity bound of
//! the path-cost map; [`estimate_cocoercivity`] computes that bound from the
//! incidence structure and a worst-case cost slope, and the per-iteration
//! Kullback–Leibler decrease it certifies is exposed as
//! [`kl_decrement_bound`].

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::exec::{VecExec, Workspace};
use crate::net::Network;
use crate::paths::PathSet;
use crate::sparse;
use crate::unroll::UnrolledModel;

/// All-or-nothing assignment: within each OD group, all mass on the cheapest
/// route (ties to the lowest path index).
pub fn all_or_nothing(od_ptr: &[usize], c: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; c.len()];
    for w in 0..od_ptr.len() - 1 {
        let (lo, hi) = (od_ptr[w], od_ptr[w + 1]);
        let mut best = lo;
        for k in lo + 1..hi {
            if c[k] < c[best] {
                best = k;
            }
        }
        p[best] = 1.0;
    }
    p
}

/// Absolute demand-weighted equilibrium gap `δ = −⟨c, q∘(p′−p)⟩` with `p′`
/// the all-or-nothing assignment. Nonnegative, zero iff `p` routes only on
/// cheapest paths.
pub fn gap_absolute(od_ptr: &[usize], q: &[f64], c: &[f64], p: &[f64]) -> f64 {
    let aon = all_or_nothing(od_ptr, c);
    let mut acc = 0.0;
    for k in 0..c.len() {
        acc -= c[k] * q[k] * (aon[k] - p[k]);
    }
    acc
}

/// Relative multiclass gap `max_m −⟨c_m, p′_m−p_m⟩ / ⟨c_m, p_m⟩` (plain
/// inner products, no demand weighting).
pub fn gap_relative_multiclass(od_ptr: &[usize], cs: &[Vec<f64>], ps: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (c, p) in cs.iter().zip(ps) {
        let aon = all_or_nothing(od_ptr, c);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..c.len() {
            num -= c[k] * (aon[k] - p[k]);
            den += c[k] * p[k];
        }
        worst = worst.max(num / den);
    }
    worst
}

/// Uniform distribution over each OD group's routes.
pub fn equal_distribution_init(od_ptr: &[usize]) -> Vec<f64> {
    let n = *od_ptr.last().unwrap();
    let mut p = vec![0.0; n];
    for w in 0..od_ptr.len() - 1 {
        let (lo, hi) = (od_ptr[w], od_ptr[w + 1]);
        for k in lo..hi {
            p[k] = 1.0 / (hi - lo) as f64;
        }
    }
    p
}

/// Total Kullback–Leibler divergence `Σ_k p_a[k]·ln(p_a[k]/p_b[k])` with the
/// conventions `0·ln 0 = 0` and `+∞` whenever `p_a` has mass where `p_b` has
/// none.
pub fn kl_total(p_a: &[f64], p_b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in p_a.iter().zip(p_b) {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return f64::INFINITY;
        }
        acc += a * (a / b).ln();
    }
    acc
}

/// True iff the support of `p_star` is contained in the support of `p0`
/// (ILD can only reach `p_star` from `p0` when this holds).
pub fn cover_check(p_star: &[f64], p0: &[f64]) -> bool {
    p_star.iter().zip(p0).all(|(s, i)| *s == 0.0 || *i > 0.0)
}

/// One ILD update from given path costs: `p⁺ ∝ p∘exp(−r·c)` renormalized per
/// OD group. Uses the same kernels, in the same order, as the recorded
/// dynamics layer, so results are bit-identical to a recorded step.
pub fn ild_from_costs(od_ptr: &[usize], c: &[f64], p: &[f64], r: f64) -> Vec<f64> {
    let n = c.len();
    let mut t0 = vec![0.0; n];
    sparse::ew_scale(-r, c, &mut t0);
    let mut t1 = vec![0.0; n];
    sparse::group_shift_max(od_ptr, &t0, &mut t1);
    let mut e = vec![0.0; n];
    sparse::ew_exp(&t1, &mut e);
    let mut g = vec![0.0; n];
    sparse::ew_mul(&e, p, &mut g);
    // Per-group normalization: ascending-index sums, then broadcast divide,
    // matching the Σ-matrix round trip of the recorded layer.
    let mut srep = vec![0.0; n];
    for w in 0..od_ptr.len() - 1 {
        let (lo, hi) = (od_ptr[w], od_ptr[w + 1]);
        let mut s = 0.0;
        for k in lo..hi {
            s += g[k];
        }
        for k in lo..hi {
            srep[k] = s;
        }
    }
    let mut p_next = vec![0.0; n];
    sparse::ew_div(&g, &srep, &mut p_next);
    p_next
}

/// One ILD step for a single-class model on a network: computes link flows,
/// link costs, path costs, then applies [`ild_from_costs`].
pub fn ild_step(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
    p: &[f64],
    r: f64,
) -> Result<Vec<f64>> {
    let c = network_path_costs(net, ps, model, p)?;
    Ok(ild_from_costs(&ps.od_ptr, &c, p, r))
}

/// One ILD step per class from per-class path costs.
pub fn ild_step_multiclass(
    od_ptr: &[usize],
    costs: &[Vec<f64>],
    ps: &[Vec<f64>],
    r: f64,
) -> Vec<Vec<f64>> {
    costs
        .iter()
        .zip(ps)
        .map(|(c, p)| ild_from_costs(od_ptr, c, p, r))
        .collect()
}

/// Path costs of a single-class model at distribution `p`.
pub fn network_path_costs(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
    p: &[f64],
) -> Result<Vec<f64>> {
    let mut f = vec![0.0; ps.n_paths()];
    sparse::ew_mul(&ps.q, p, &mut f);
    let mut x = vec![0.0; net.links.len()];
    ps.lambda.mul(&f, &mut x)?;
    let u = model.link_cost(&net.links, &x)?;
    let mut c = vec![0.0; ps.n_paths()];
    ps.lambda.mul_t(&u, &mut c)?;
    Ok(c)
}

/// How dual averaging aggregates past costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Plain accumulation `s⁺ = s + c`.
    Sum,
    /// Running average `s⁺ = αₜ·s + (1−αₜ)·c` with `αₜ = t/(t+1)`.
    Watling,
}

/// State of the dual-averaging dynamics.
#[derive(Debug, Clone)]
pub struct DualAveragingState {
    pub s: Vec<f64>,
    pub t: usize,
    pub kind: Averaging,
}

impl DualAveragingState {
    pub fn new(n_paths: usize, kind: Averaging) -> Self {
        Self {
            s: vec![0.0; n_paths],
            t: 0,
            kind,
        }
    }
}

/// One dual-averaging update: aggregate the new costs into `s`, then assign
/// `p ∝ exp(−r·s)` per OD group. Unlike ILD the new distribution ignores the
/// previous one.
pub fn dual_averaging_step(
    state: &mut DualAveragingState,
    od_ptr: &[usize],
    c: &[f64],
    r: f64,
) -> Vec<f64> {
    match state.kind {
        Averaging::Sum => {
            for (s, c) in state.s.iter_mut().zip(c) {
                *s += c;
            }
        }
        Averaging::Watling => {
            let a = state.t as f64 / (state.t + 1) as f64;
            for (s, c) in state.s.iter_mut().zip(c) {
                *s = a * *s + (1.0 - a) * c;
            }
        }
    }
    state.t += 1;
    let ones = vec![1.0; c.len()];
    ild_from_costs(od_ptr, &state.s, &ones, r)
}

/// One point of a convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub gap: f64,
    /// KL divergence from the reference distribution to the iterate (`NaN`
    /// when no reference was supplied).
    pub kl_to_reference: f64,
}

/// Solver configuration for the lower-level dynamics.
#[derive(Debug, Clone)]
pub struct IldConfig {
    /// Logit learning rate `r`.
    pub r: f64,
    /// Stop once the absolute gap is at most `eps`.
    pub eps: f64,
    pub max_iters: usize,
    /// Record a trace point every this many iterations (0 disables
    /// intermediate points; the final point is always recorded).
    pub trace_every: usize,
    /// Reference distributions (per class) for the trace's KL column.
    pub reference: Option<Vec<Vec<f64>>>,
}

impl IldConfig {
    pub fn new(r: f64, eps: f64, max_iters: usize) -> Self {
        Self {
            r,
            eps,
            max_iters,
            trace_every: 1,
            reference: None,
        }
    }
}

/// Result of a lower-level equilibrium solve.
#[derive(Debug, Clone)]
pub struct RoutingState {
    /// Per-class route distributions at the returned iterate.
    pub p: Vec<Vec<f64>>,
    /// Per-class path costs at the returned iterate.
    pub costs: Vec<Vec<f64>>,
    /// Absolute gap at the returned iterate.
    pub gap: f64,
    /// Dynamics iterations applied (the returned iterate is `p^iterations`).
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

fn kl_to_reference(reference: &Option<Vec<Vec<f64>>>, p: &[Vec<f64>]) -> f64 {
    match reference {
        Some(rs) => rs.iter().zip(p).map(|(r, p)| kl_total(r, p)).sum(),
        None => f64::NAN,
    }
}

/// Solve the lower-level equilibrium by iterating the model's dynamics layer
/// at fixed decision `z` until the absolute gap reaches `cfg.eps`.
///
/// The gap is tested before each step: the returned `p` is the first iterate
/// meeting the tolerance, and no step past it is applied.
pub fn solve_we<M: UnrolledModel>(
    model: &M,
    z: &[f64],
    p0: &[Vec<f64>],
    cfg: &IldConfig,
) -> RoutingState {
    let mut ws = Workspace::new();
    let mut p: Vec<Vec<f64>> = p0.to_vec();
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut costs: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..=cfg.max_iters {
        ws.reset();
        let zr = ws.input(z);
        let pr: Vec<usize> = p.iter().map(|v| ws.input(v)).collect();
        let out = model.layer(&mut ws, &pr, zr);
        costs = out.costs.iter().map(|&c| ws.value(c).to_vec()).collect();
        gap = (0..model.n_classes())
            .map(|m| gap_absolute(model.od_ptr(), model.path_demand(m), &costs[m], &p[m]))
            .sum();
        iterations = t;
        let last = gap <= cfg.eps || t == cfg.max_iters;
        if (cfg.trace_every > 0 && t % cfg.trace_every == 0) || last {
            trace.push(TracePoint {
                iteration: t,
                gap,
                kl_to_reference: kl_to_reference(&cfg.reference, &p),
            });
        }
        if gap <= cfg.eps {
            converged = true;
            break;
        }
        if t == cfg.max_iters {
            break;
        }
        p = out.p_next.iter().map(|&r| ws.value(r).to_vec()).collect();
    }
    RoutingState {
        p,
        costs,
        gap,
        iterations,
        converged,
        trace,
    }
}

/// Shared single-class network loop: iterate ILD on whatever link costs
/// `cost_fn` produces from the current link flows.
fn solve_network_game<F>(
    net: &Network,
    ps: &PathSet,
    cost_fn: F,
    cfg: &IldConfig,
) -> Result<RoutingState>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut p = equal_distribution_init(&ps.od_ptr);
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut costs = vec![0.0; ps.n_paths()];
    let mut converged = false;
    let mut iterations = 0;
    let mut f = vec![0.0; ps.n_paths()];
    let mut x = vec![0.0; net.links.len()];
    for t in 0..=cfg.max_iters {
        sparse::ew_mul(&ps.q, &p, &mut f);
        ps.lambda.mul(&f, &mut x)?;
        let u = cost_fn(&x)?;
        ps.lambda.mul_t(&u, &mut costs)?;
        gap = gap_absolute(&ps.od_ptr, &ps.q, &costs, &p);
        iterations = t;
        let last = gap <= cfg.eps || t == cfg.max_iters;
        if (cfg.trace_every > 0 && t % cfg.trace_every == 0) || last {
            trace.push(TracePoint {
                iteration: t,
                gap,
                kl_to_reference: kl_to_reference(&cfg.reference, std::slice::from_ref(&p)),
            });
        }
        if gap <= cfg.eps {
            converged = true;
            break;
        }
        if t == cfg.max_iters {
            break;
        }
        p = ild_from_costs(&ps.od_ptr, &costs, &p, cfg.r);
    }
    Ok(RoutingState {
        p: vec![p],
        costs: vec![costs],
        gap,
        iterations,
        converged,
        trace,
    })
}

/// Single-class equilibrium under plain link costs, from the equal
/// distribution. The network-level counterpart of [`solve_we`] for callers
/// that have no recorded model (baselines, link-selection heuristics).
pub fn we_solve(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
    cfg: &IldConfig,
) -> Result<RoutingState> {
    solve_network_game(net, ps, |x| model.link_cost(&net.links, x), cfg)
}

/// Equilibrium under *marginal* link costs `u + x∘u′`: its link flows are the
/// system-optimal flows, so the result prices out congestion externalities.
pub fn ce_solve(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
    cfg: &IldConfig,
) -> Result<RoutingState> {
    solve_network_game(net, ps, |x| model.marginal_link_cost(&net.links, x), cfg)
}

/// Co-coercivity bound of the path-cost map and the step sizes it certifies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocoercivityEstimate {
    /// Lipschitz bound `L` of `p ↦ c(p)`.
    pub l_bound: f64,
    /// Co-coercivity constant `c_z = 1/(4L)`.
    pub c_z: f64,
    /// Worst-case cost slope over the reachable flow box.
    pub u_prime_max: f64,
    /// `‖Λᵀ‖₂`.
    pub norm_lambda_t: f64,
    /// `‖Λ·diag(q)‖₂`.
    pub norm_lambda_q: f64,
}

impl CocoercivityEstimate {
    /// Largest certified learning rate, with a 10 % margin below `2·c_z`.
    pub fn safe_rate(&self) -> f64 {
        0.9 * 2.0 * self.c_z
    }

    /// Clamp a requested rate to the certified range.
    pub fn clamp_rate(&self, r: f64) -> f64 {
        r.min(self.safe_rate())
    }
}

/// Guaranteed per-iteration decrease of `KL(p*, ·)` for one certified ILD
/// step: `((2c_z − r)/(4c_z))·‖p − p⁺‖²`.
pub fn kl_decrement_bound(c_z: f64, r: f64, p: &[f64], p_next: &[f64]) -> f64 {
    let d2: f64 = p.iter().zip(p_next).map(|(a, b)| (a - b) * (a - b)).sum();
    (2.0 * c_z - r) / (4.0 * c_z) * d2
}

/// Spectral norm of `Λ·diag(w)` by deterministic power iteration on
/// `diag(w)·ΛᵀΛ·diag(w)`.
fn spectral_norm_weighted(ps: &PathSet, w: &[f64]) -> f64 {
    let k = ps.n_paths();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut wv = vec![0.0; k];
    let mut x = vec![0.0; ps.lambda.nrows()];
    let mut back = vec![0.0; k];
    let mut lambda_prev = 0.0;
    for _ in 0..500 {
        sparse::ew_mul(w, &v, &mut wv);
        sparse::spmv(&ps.lambda, &wv, &mut x);
        sparse::spmv_t(&ps.lambda, &x, &mut back);
        sparse::ew_mul(w, &back, &mut wv);
        let lambda = sparse::dot(&v, &wv);
        let norm = sparse::dot(&wv, &wv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (v, t) in v.iter_mut().zip(&wv) {
            *v = t / norm;
        }
        if (lambda - lambda_prev).abs() <= 1e-13 * lambda.max(1.0) {
            lambda_prev = lambda;
            break;
        }
        lambda_prev = lambda;
    }
    lambda_prev.max(0.0).sqrt()
}

/// Row/column-sum bound on the same norm, `‖M‖₂ ≤ √(‖M‖₁·‖M‖∞)`; cheap and
/// valid for networks too large for power iteration.
fn spectral_norm_bound(ps: &PathSet, w: &[f64]) -> f64 {
    let mut row = vec![0.0f64; ps.lambda.nrows()];
    let mut col_max = 0.0f64;
    for j in 0..ps.n_paths() {
        let links = ps.lambda.col(j);
        col_max = col_max.max(w[j] * links.len() as f64);
        for &a in links {
            row[a] += w[j];
        }
    }
    let row_max = row.iter().fold(0.0f64, |m, r| m.max(*r));
    (row_max * col_max).sqrt()
}

/// Paths beyond which [`estimate_cocoercivity`] switches from power
/// iteration to the row/column-sum bound.
const POWER_ITERATION_LIMIT: usize = 20_000;

/// Bound the co-coercivity of the path-cost map `p ↦ Λᵀu(Λ(q∘p))`.
///
/// The Jacobian is `Λᵀ·diag(u′)·Λ·diag(q)`, so `L ≤ ‖Λᵀ‖₂ · max_a u′_a ·
/// ‖Λ·diag(q)‖₂`, with the slope maximized over the reachable flow box
/// `0 ≤ x ≤ Λq` (every link carries at most all demand that can route over
/// it). Norms use deterministic power iteration, or the row/column-sum bound
/// on very large path sets.
pub fn estimate_cocoercivity(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
) -> Result<CocoercivityEstimate> {
    let mut flow_bound = vec![0.0; net.links.len()];
    ps.lambda.mul(&ps.q, &mut flow_bound)?;
    let slopes = model.link_cost_deriv(&net.links, &flow_bound)?;
    let u_prime_max = slopes.iter().fold(0.0f64, |m, s| m.max(*s));
    if !u_prime_max.is_finite() {
        return Err(Error::Degenerate("cost slope bound is not finite".into()));
    }
    let ones = vec![1.0; ps.n_paths()];
    let (norm_lambda_t, norm_lambda_q) = if ps.n_paths() <= POWER_ITERATION_LIMIT {
        (
            spectral_norm_weighted(ps, &ones),
            spectral_norm_weighted(ps, &ps.q),
        )
    } else {
        (spectral_norm_bound(ps, &ones), spectral_norm_bound(ps, &ps.q))
    };
    let l_bound = norm_lambda_t * u_prime_max * norm_lambda_q;
    if l_bound <= 0.0 {
        return Err(Error::Degenerate("cost map has zero Lipschitz bound".into()));
    }
    Ok(CocoercivityEstimate {
        l_bound,
        c_z: 1.0 / (4.0 * l_bound),
        u_prime_max,
        norm_lambda_t,
        norm_lambda_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostKind;
    use crate::net::{build_braess, build_two_link, BraessVariant};
    use crate::paths::enumerate_paths;

    fn two_link_setup() -> (Network, PathSet, CostModel) {
        let net = build_two_link();
        let ps = enumerate_paths(&net, 4).unwrap();
        let model = CostModel { kind: CostKind::Affine, gamma: 0.0 };
        (net, ps, model)
    }

    #[test]
    fn ild_matches_hand_value() {
        let p = ild_from_costs(&[0, 2], &[1.0, 2.0], &[0.5, 0.5], 1.0);
        assert!((p[0] - 0.731_058_578_6).abs() < 1e-9);
        assert!((p[1] - 0.268_941_421_4).abs() < 1e-9);
    }

    #[test]
    fn ild_preserves_simplex_per_group() {
        let od_ptr = [0usize, 3, 5];
        let c = [3.0, 1.0, 2.0, 0.5, 0.5];
        let p = [0.2, 0.5, 0.3, 0.9, 0.1];
        let next = ild_from_costs(&od_ptr, &c, &p, 0.7);
        let s1: f64 = next[0..3].iter().sum();
        let s2: f64 = next[3..5].iter().sum();
        assert!((s1 - 1.0).abs() < 1e-12 && (s2 - 1.0).abs() < 1e-12);
        assert!(next.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ild_survives_extreme_costs() {
        // Without the per-OD shift, exp(800) would overflow.
        let p = ild_from_costs(&[0, 2], &[-800.0, 800.0], &[0.5, 0.5], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert_eq!(p[1], 0.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gap_oracle_two_link() {
        let (net, ps, model) = two_link_setup();
        let c = network_path_costs(&net, &ps, &model, &[0.5, 0.5]).unwrap();
        assert_eq!(c, vec![2.5, 3.5]);
        let gap = gap_absolute(&ps.od_ptr, &ps.q, &c, &[0.5, 0.5]);
        assert!((gap - 1.5).abs() < 1e-12);
        let rel = gap_relative_multiclass(
            &ps.od_ptr,
            &[c.clone()],
            &[vec![0.5, 0.5]],
        );
        assert!((rel - 0.5 / 3.0).abs() < 1e-12);
        // At equilibrium both vanish.
        let c_eq = network_path_costs(&net, &ps, &model, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(gap_absolute(&ps.od_ptr, &ps.q, &c_eq, &[2.0 / 3.0, 1.0 / 3.0]).abs() < 1e-12);
    }

    #[test]
    fn all_or_nothing_breaks_ties_low_index() {
        let aon = all_or_nothing(&[0, 3], &[2.0, 2.0, 3.0]);
        assert_eq!(aon, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn kl_conventions() {
        assert!((kl_total(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(kl_total(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
        assert_eq!(kl_total(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn cover_check_is_support_containment() {
        assert!(cover_check(&[0.5, 0.0, 0.5], &[0.1, 0.0, 0.9]));
        assert!(!cover_check(&[0.5, 0.5, 0.0], &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn ce_solve_two_link_reaches_system_optimum() {
        let (net, ps, model) = two_link_setup();
        let cfg = IldConfig::new(0.2, 1e-10, 200_000);
        let st = ce_solve(&net, &ps, &model, &cfg).unwrap();
        assert!(st.converged);
        // System-optimal link flows (1.75, 1.25).
        let f: Vec<f64> = ps.q.iter().zip(&st.p[0]).map(|(q, p)| q * p).collect();
        assert!((f[0] - 1.75).abs() < 1e-4, "{f:?}");
        assert!((f[1] - 1.25).abs() < 1e-4);
    }

    #[test]
    fn dual_averaging_approaches_equilibrium() {
        let (net, ps, model) = two_link_setup();
        let mut st = DualAveragingState::new(2, Averaging::Sum);
        let mut p = equal_distribution_init(&ps.od_ptr);
        for _ in 0..20_000 {
            let c = network_path_costs(&net, &ps, &model, &p).unwrap();
            p = dual_averaging_step(&mut st, &ps.od_ptr, &c, 0.05);
        }
        assert!((p[0] - 2.0 / 3.0).abs() < 0.02, "{p:?}");
    }

    #[test]
    fn watling_averaging_approaches_equilibrium() {
        // The averaged dynamics settle at a logit equilibrium; a sharp rate
        // keeps its distance to the Wardrop split small.
        let (net, ps, model) = two_link_setup();
        let mut st = DualAveragingState::new(2, Averaging::Watling);
        let mut p = equal_distribution_init(&ps.od_ptr);
        for _ in 0..20_000 {
            let c = network_path_costs(&net, &ps, &model, &p).unwrap();
            p = dual_averaging_step(&mut st, &ps.od_ptr, &c, 20.0);
        }
        assert!((p[0] - 2.0 / 3.0).abs() < 0.02, "{p:?}");
    }

    #[test]
    fn cocoercivity_two_link_is_exact() {
        let (net, ps, model) = two_link_setup();
        let est = estimate_cocoercivity(&net, &ps, &model).unwrap();
        assert!((est.l_bound - 3.0).abs() < 1e-9, "{est:?}");
        assert!((est.c_z - 1.0 / 12.0).abs() < 1e-10);
        assert!(est.safe_rate() < 2.0 * est.c_z);
    }

    #[test]
    fn cocoercivity_braess_bound() {
        let net = build_braess(BraessVariant::WithBridge);
        let ps = enumerate_paths(&net, 5).unwrap();
        let model = CostModel { kind: CostKind::Affine, gamma: 0.0 };
        let est = estimate_cocoercivity(&net, &ps, &model).unwrap();
        assert!((est.l_bound - 240.0).abs() < 1e-6, "{est:?}");
        assert!((est.norm_lambda_t - 2.0).abs() < 1e-9);
        assert!((est.norm_lambda_q - 12.0).abs() < 1e-9);
    }

    #[test]
    fn rowcol_bound_dominates_power_iteration() {
        let net = build_braess(BraessVariant::WithBridge);
        let ps = enumerate_paths(&net, 5).unwrap();
        let ones = vec![1.0; ps.n_paths()];
        assert!(spectral_norm_bound(&ps, &ones) >= spectral_norm_weighted(&ps, &ones) - 1e-12);
        assert!(spectral_norm_bound(&ps, &ps.q) >= spectral_norm_weighted(&ps, &ps.q) - 1e-12);
    }

    #[test]
    fn kl_decrement_bound_nonnegative_for_certified_rates() {
        let (net, ps, model) = two_link_setup();
        let est = estimate_cocoercivity(&net, &ps, &model).unwrap();
        let r = est.safe_rate();
        let mut p = vec![0.9, 0.1];
        let p_star = [2.0 / 3.0, 1.0 / 3.0];
        let mut kl_prev = kl_total(&p_star, &p);
        for _ in 0..200 {
            let c = network_path_costs(&net, &ps, &model, &p).unwrap();
            let next = ild_from_costs(&ps.od_ptr, &c, &p, r);
            let bound = kl_decrement_bound(est.c_z, r, &p, &next);
            assert!(bound >= 0.0);
            let kl_next = kl_total(&p_star, &next);
            assert!(
                kl_prev - kl_next >= bound - 1e-12,
                "KL fell {} but bound was {bound}",
                kl_prev - kl_next
            );
            kl_prev = kl_next;
            p = next;
        }
    }
}
