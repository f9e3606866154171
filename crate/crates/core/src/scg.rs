//! Leader-side optimization: mirror descent over the unrolled dynamics.
//!
//! The leader minimizes an objective `J(z, p)` whose follower part `p` obeys
//! the route-choice dynamics. All solvers share three ingredients: a gradient
//! `l_z` obtained by differentiating through a recorded lookahead of the
//! dynamics ([`crate::unroll`]), a mirror-descent step on a feasible set
//! ([`upper_md_step`]), and the stationarity measure
//! `δ = −⟨l_z, z⁺ − z⟩/ρ` ([`termination_metric`]), which vanishes exactly at
//! fixed points of the step.
//!
//! Four drivers differ in how tightly the two levels are coupled:
//!
//! * [`dol_md`] (double loop): each leader iteration re-solves the follower
//!   equilibrium from the *original* initial distribution, recording the
//!   whole trajectory, and differentiates through it.
//! * [`sil_md`] (single loop): leader and followers move together; each
//!   leader gradient comes from a fixed `T`-step lookahead recorded at the
//!   current pair, and the followers then take one step at the *old*
//!   decision. `T = 0` differentiates the objective at frozen routes
//!   (a Cournot follower); objectives that depend on `z` only through the
//!   routes need `T ≥ 1` to see any gradient.
//! * [`ioa`] (iterative): alternates a full equilibrium solve with a full
//!   leader minimization at frozen routes; its fixed points coincide with
//!   the `T = 0` single loop.
//! * [`so_solve`] (system optimum): drops the equilibrium constraint and
//!   co-evolves `z` with routes that follow *marginal* costs, yielding the
//!   joint benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{gap_absolute, ild_from_costs};
use crate::error::{Error, Result};
use crate::exec::{VecExec, Workspace};
use crate::unroll::{backward, forward_record, forward_record_adaptive, UnrolledModel};

/// Feasible set of the leader decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeasibleSet {
    /// `z ≥ 0`, with a mask of coordinates pinned at zero (non-tollable
    /// links, non-expandable capacity).
    NonnegOrthant { fixed_zero: Vec<bool> },
    /// A product of probability simplices over contiguous index ranges
    /// `lo..hi` (per-OD fleet route splits).
    SimplexProducts { groups: Vec<(usize, usize)> },
    /// Coordinatewise bounds `lo ≤ z ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl FeasibleSet {
    /// Dimension-checked membership up to tolerance (used by self-checks).
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        match self {
            FeasibleSet::NonnegOrthant { fixed_zero } => {
                z.len() == fixed_zero.len()
                    && z.iter().zip(fixed_zero).all(|(v, fixed)| {
                        *v >= -tol && (!fixed || v.abs() <= tol)
                    })
            }
            FeasibleSet::SimplexProducts { groups } => groups.iter().all(|&(lo, hi)| {
                hi <= z.len()
                    && z[lo..hi].iter().all(|v| *v >= -tol)
                    && (z[lo..hi].iter().sum::<f64>() - 1.0).abs() <= tol
            }),
            FeasibleSet::Box { lo, hi } => {
                z.len() == lo.len()
                    && z.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
        }
    }
}

/// Local geometry of the mirror-descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    /// Squared-Euclidean Bregman divergence: projected gradient steps.
    Euclidean,
    /// Entropic divergence: multiplicative updates (which keep zero
    /// coordinates at zero — start interior when the minimizer may need
    /// them positive).
    Entropic,
}

/// Euclidean projection of `v` onto the probability simplex (sort-based).
fn project_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (j, s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - 1.0) / (j + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// One mirror-descent step `z⁺ = argmin ρ⟨g, z⟩ + D(z, z_old)` over `set`.
pub fn upper_md_step(
    z: &[f64],
    grad: &[f64],
    rho: f64,
    set: &FeasibleSet,
    geom: Geometry,
) -> Vec<f64> {
    assert_eq!(z.len(), grad.len(), "md step: gradient length mismatch");
    let mut out = vec![0.0; z.len()];
    match (set, geom) {
        (FeasibleSet::NonnegOrthant { fixed_zero }, Geometry::Euclidean) => {
            for i in 0..z.len() {
                out[i] = if fixed_zero[i] { 0.0 } else { (z[i] - rho * grad[i]).max(0.0) };
            }
        }
        (FeasibleSet::NonnegOrthant { fixed_zero }, Geometry::Entropic) => {
            for i in 0..z.len() {
                out[i] = if fixed_zero[i] { 0.0 } else { z[i] * (-rho * grad[i]).exp() };
            }
        }
        (FeasibleSet::SimplexProducts { groups }, Geometry::Entropic) => {
            for &(lo, hi) in groups {
                let shift = grad[lo..hi].iter().fold(f64::INFINITY, |m, g| m.min(*g));
                let mut sum = 0.0;
                for i in lo..hi {
                    out[i] = z[i] * (-rho * (grad[i] - shift)).exp();
                    sum += out[i];
                }
                for i in lo..hi {
                    out[i] /= sum;
                }
            }
        }
        (FeasibleSet::SimplexProducts { groups }, Geometry::Euclidean) => {
            for &(lo, hi) in groups {
                for i in lo..hi {
                    out[i] = z[i] - rho * grad[i];
                }
                project_simplex(&mut out[lo..hi]);
            }
        }
        // Both Bregman projections onto a box are coordinatewise clamps
        // (the divergences are separable and coordinatewise convex).
        (FeasibleSet::Box { lo, hi }, geom) => {
            for i in 0..z.len() {
                let free = match geom {
                    Geometry::Euclidean => z[i] - rho * grad[i],
                    Geometry::Entropic => z[i] * (-rho * grad[i]).exp(),
                };
                out[i] = free.clamp(lo[i], hi[i]);
            }
        }
    }
    out
}

/// Stationarity measure of one step: `δ = −⟨g, z⁺ − z⟩/ρ`. Nonnegative, and
/// zero exactly when the step leaves `z` fixed.
pub fn termination_metric(grad: &[f64], z_old: &[f64], z_new: &[f64], rho: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..grad.len() {
        acc -= grad[i] * (z_new[i] - z_old[i]);
    }
    acc / rho
}

/// Tolerances, rates, and geometry shared by the leader solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgOptions {
    /// Follower logit rate `r`.
    pub r: f64,
    /// Leader step size `ρ`.
    pub rho: f64,
    /// Follower gap tolerance `ε`.
    pub eps: f64,
    /// Leader stationarity tolerance `τ`.
    pub tau: f64,
    /// Lookahead depth `T` of the single-loop gradient.
    pub t_lookahead: usize,
    pub max_outer: usize,
    /// Cap on follower iterations per equilibrium solve.
    pub max_inner: usize,
    pub feasible: FeasibleSet,
    pub geometry: Geometry,
    /// Halve `ρ` after five consecutive objective increases (off by default,
    /// matching plain mirror descent).
    pub safeguard_halving: bool,
}

/// Step-size safeguard: halves `ρ` once the objective has increased five
/// outer iterations in a row.
struct Safeguard {
    enabled: bool,
    prev: f64,
    streak: usize,
}

impl Safeguard {
    fn new(enabled: bool) -> Self {
        Self { enabled, prev: f64::INFINITY, streak: 0 }
    }

    /// Feed the latest objective; possibly shrink `rho` in place.
    fn observe(&mut self, objective: f64, rho: &mut f64) {
        if !self.enabled {
            return;
        }
        if objective > self.prev {
            self.streak += 1;
            if self.streak >= 5 {
                *rho *= 0.5;
                self.streak = 0;
            }
        } else {
            self.streak = 0;
        }
        self.prev = objective;
    }
}

/// One row of a leader solver's iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgLogRow {
    pub iter: usize,
    pub objective: f64,
    pub lower_gap: f64,
    pub upper_metric: f64,
    pub elapsed_s: f64,
}

/// Solution of a leader solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgSolution {
    pub z: Vec<f64>,
    /// Per-class route distributions at the returned decision.
    pub p: Vec<Vec<f64>>,
    pub objective: f64,
    /// `"converged"` or `"max_iterations"`.
    pub status: String,
    pub outer_iterations: usize,
    /// Follower gap at the returned pair.
    pub lower_gap: f64,
    /// Stationarity measure at the returned pair.
    pub upper_metric: f64,
    #[serde(skip)]
    pub log: Vec<ScgLogRow>,
}

impl ScgSolution {
    pub fn converged(&self) -> bool {
        self.status == "converged"
    }
}

/// Evaluate one dynamics layer without recording: returns the stepped
/// distributions, per-class costs, and the absolute gap at `(p, z)`.
pub fn evaluate_layer<M: UnrolledModel>(
    model: &M,
    ws: &mut Workspace,
    p: &[Vec<f64>],
    z: &[f64],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
    ws.reset();
    let zr = ws.input(z);
    let pr: Vec<usize> = p.iter().map(|v| ws.input(v)).collect();
    let out = model.layer(ws, &pr, zr);
    let costs: Vec<Vec<f64>> = out.costs.iter().map(|&c| ws.value(c).to_vec()).collect();
    let p_next: Vec<Vec<f64>> = out.p_next.iter().map(|&r| ws.value(r).to_vec()).collect();
    let gap = (0..model.n_classes())
        .map(|m| gap_absolute(model.od_ptr(), model.path_demand(m), &costs[m], &p[m]))
        .sum();
    (p_next, costs, gap)
}

/// Evaluate the leader objective without recording.
pub fn evaluate_objective<M: UnrolledModel>(
    model: &M,
    ws: &mut Workspace,
    p: &[Vec<f64>],
    z: &[f64],
) -> f64 {
    ws.reset();
    let zr = ws.input(z);
    let pr: Vec<usize> = p.iter().map(|v| ws.input(v)).collect();
    let j = model.objective(ws, &pr, zr);
    ws.value(j)[0]
}

/// Double-loop mirror descent.
///
/// Each outer iteration solves the follower equilibrium from the *original*
/// `p0` at the current decision (recording the trajectory), differentiates
/// the objective through the recorded trajectory, and takes one leader step.
/// Stops when the stationarity measure drops below `τ`.
pub fn dol_md<M: UnrolledModel>(
    model: &M,
    opts: &ScgOptions,
    z0: &[f64],
    p0: &[Vec<f64>],
) -> ScgSolution {
    let started = Instant::now();
    let mut rho = opts.rho;
    let mut z = z0.to_vec();
    let mut log = Vec::new();
    let mut status = "max_iterations".to_string();
    let mut p = p0.to_vec();
    let mut gap = f64::NAN;
    let mut metric = f64::NAN;
    let mut objective = f64::NAN;
    let mut outer = 0;
    let mut safeguard = Safeguard::new(opts.safeguard_halving);
    for i in 0..opts.max_outer {
        outer = i;
        let mut rec = forward_record_adaptive(model, p0, &z, opts.eps, opts.max_inner);
        let grad = backward(&mut rec);
        objective = grad.value;
        p = rec.p_final_values();
        gap = rec.final_gap;
        if !rec.converged {
            // The equilibrium solve ran out of budget: abort rather than
            // step on a gradient taken at a non-equilibrium.
            status = "inner_not_converged".into();
            log.push(ScgLogRow {
                iter: i,
                objective,
                lower_gap: gap,
                upper_metric: f64::NAN,
                elapsed_s: started.elapsed().as_secs_f64(),
            });
            break;
        }
        safeguard.observe(objective, &mut rho);
        let z_next = upper_md_step(&z, &grad.l_z, rho, &opts.feasible, opts.geometry);
        metric = termination_metric(&grad.l_z, &z, &z_next, rho);
        log.push(ScgLogRow {
            iter: i,
            objective,
            lower_gap: gap,
            upper_metric: metric,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        if metric < opts.tau {
            status = "converged".into();
            break;
        }
        z = z_next;
    }
    ScgSolution {
        z,
        p,
        objective,
        status,
        outer_iterations: outer + 1,
        lower_gap: gap,
        upper_metric: metric,
        log,
    }
}

/// Single-loop mirror descent with a `T`-step lookahead gradient.
///
/// Per iteration: record `T` dynamics layers from the current pair and
/// differentiate the objective through them; step the leader; step the
/// followers once at the *old* decision. Stops when, after both updates, the
/// follower gap is within `ε` and the last leader step was `τ`-stationary.
pub fn sil_md<M: UnrolledModel>(
    model: &M,
    opts: &ScgOptions,
    z0: &[f64],
    p0: &[Vec<f64>],
) -> ScgSolution {
    let started = Instant::now();
    let mut ws = Workspace::new();
    let mut rho = opts.rho;
    let mut z = z0.to_vec();
    let mut p = p0.to_vec();
    let mut log = Vec::new();
    let mut status = "max_iterations".to_string();
    let mut gap = f64::NAN;
    let mut metric = f64::NAN;
    let mut objective = f64::NAN;
    let mut outer = 0;
    let mut prev_metric = f64::INFINITY;
    let mut safeguard = Safeguard::new(opts.safeguard_halving);
    for i in 0..opts.max_outer {
        outer = i;
        let (p_stepped, _costs, gap_now) = evaluate_layer(model, &mut ws, &p, &z);
        gap = gap_now;
        if gap <= opts.eps && prev_metric < opts.tau {
            status = "converged".into();
            metric = prev_metric;
            objective = evaluate_objective(model, &mut ws, &p, &z);
            break;
        }
        let mut rec = forward_record(model, &p, &z, opts.t_lookahead);
        let grad = backward(&mut rec);
        objective = grad.value;
        safeguard.observe(objective, &mut rho);
        let z_next = upper_md_step(&z, &grad.l_z, rho, &opts.feasible, opts.geometry);
        metric = termination_metric(&grad.l_z, &z, &z_next, rho);
        log.push(ScgLogRow {
            iter: i,
            objective,
            lower_gap: gap,
            upper_metric: metric,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        z = z_next;
        p = p_stepped;
        prev_metric = metric;
    }
    ScgSolution {
        z,
        p,
        objective,
        status,
        outer_iterations: outer + 1,
        lower_gap: gap,
        upper_metric: metric,
        log,
    }
}

/// Iterative optimization-assignment: alternate a full equilibrium solve at
/// fixed `z` with a full leader minimization at fixed routes (gradients at
/// frozen routes, i.e. a `T = 0` lookahead). Fixed points coincide with the
/// `T = 0` single loop.
pub fn ioa<M: UnrolledModel>(
    model: &M,
    opts: &ScgOptions,
    z0: &[f64],
    p0: &[Vec<f64>],
) -> ScgSolution {
    let started = Instant::now();
    let mut ws = Workspace::new();
    let mut z = z0.to_vec();
    let mut p = p0.to_vec();
    let mut log = Vec::new();
    let mut status = "max_iterations".to_string();
    let mut gap = f64::NAN;
    let mut metric = f64::NAN;
    let mut objective = f64::NAN;
    let mut outer = 0;
    for i in 0..opts.max_outer {
        outer = i;
        // Followers: equilibrium at fixed z (warm-started from current p).
        let cfg = crate::dynamics::IldConfig {
            r: opts.r,
            eps: opts.eps,
            max_iters: opts.max_inner,
            trace_every: 0,
            reference: None,
        };
        let st = crate::dynamics::solve_we(model, &z, &p, &cfg);
        p = st.p.clone();
        // Leader: mirror descent to stationarity at fixed routes.
        let mut inner_metric = f64::INFINITY;
        for _ in 0..opts.max_inner {
            let mut rec = forward_record(model, &p, &z, 0);
            let grad = backward(&mut rec);
            objective = grad.value;
            let z_next = upper_md_step(&z, &grad.l_z, opts.rho, &opts.feasible, opts.geometry);
            inner_metric = termination_metric(&grad.l_z, &z, &z_next, opts.rho);
            if inner_metric < opts.tau {
                break;
            }
            z = z_next;
        }
        // Residual test at the returned pair: re-evaluate both measures.
        let (_, _, gap_check) = evaluate_layer(model, &mut ws, &p, &z);
        gap = gap_check;
        metric = inner_metric;
        log.push(ScgLogRow {
            iter: i,
            objective,
            lower_gap: gap,
            upper_metric: metric,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        if gap <= opts.eps && metric < opts.tau {
            status = "converged".into();
            break;
        }
    }
    ScgSolution {
        z,
        p,
        objective,
        status,
        outer_iterations: outer + 1,
        lower_gap: gap,
        upper_metric: metric,
        log,
    }
}

/// A model whose follower side can also run on *marginal* costs, enabling the
/// system-optimum benchmark.
pub trait SystemOptimum: UnrolledModel {
    /// Per-class marginal path costs `Λᵀ(u + x∘u′)` at `(p, z)`.
    fn marginal_path_costs(&self, p: &[Vec<f64>], z: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Joint system optimum, ignoring the equilibrium constraint: co-evolve the
/// leader by `T = 0` gradient steps and the routes by logit dynamics on
/// marginal costs. Stops when the routes are marginal-cost stationary within
/// `ε` and the leader step is `τ`-stationary.
pub fn so_solve<M: SystemOptimum>(
    model: &M,
    opts: &ScgOptions,
    z0: &[f64],
    p0: &[Vec<f64>],
) -> Result<ScgSolution> {
    let started = Instant::now();
    let mut z = z0.to_vec();
    let mut p = p0.to_vec();
    let mut log = Vec::new();
    let mut status = "max_iterations".to_string();
    let mut gap = f64::NAN;
    let mut metric = f64::NAN;
    let mut objective = f64::NAN;
    let mut outer = 0;
    for i in 0..opts.max_outer {
        outer = i;
        let mc = model.marginal_path_costs(&p, &z)?;
        gap = (0..model.n_classes())
            .map(|m| gap_absolute(model.od_ptr(), model.path_demand(m), &mc[m], &p[m]))
            .sum();
        let mut rec = forward_record(model, &p, &z, 0);
        let grad = backward(&mut rec);
        objective = grad.value;
        let z_next = upper_md_step(&z, &grad.l_z, opts.rho, &opts.feasible, opts.geometry);
        metric = termination_metric(&grad.l_z, &z, &z_next, opts.rho);
        if i % 100 == 0 || (gap <= opts.eps && metric < opts.tau) {
            log.push(ScgLogRow {
                iter: i,
                objective,
                lower_gap: gap,
                upper_metric: metric,
                elapsed_s: started.elapsed().as_secs_f64(),
            });
        }
        if gap <= opts.eps && metric < opts.tau {
            status = "converged".into();
            break;
        }
        for m in 0..model.n_classes() {
            p[m] = ild_from_costs(model.od_ptr(), &mc[m], &p[m], opts.r);
        }
        z = z_next;
    }
    Ok(ScgSolution {
        z,
        p,
        objective,
        status,
        outer_iterations: outer + 1,
        lower_gap: gap,
        upper_metric: metric,
        log,
    })
}

/// Build the worker pool honoring the `STACKROUTE_THREADS` bound (unset or
/// `0` uses the rayon default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("STACKROUTE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Run `n` independently seeded solves in parallel and return them all
/// (callers pick the best converged one). `run` receives the start index.
pub fn multistart<F>(n: usize, run: F) -> Result<Vec<ScgSolution>>
where
    F: Fn(usize) -> ScgSolution + Sync,
{
    use rayon::prelude::*;
    let pool = thread_pool()?;
    Ok(pool.install(|| (0..n).into_par_iter().map(|i| run(i)).collect()))
}

/// Pick the converged solution with the lowest objective (falling back to
/// the lowest objective overall when none converged).
pub fn best_solution(solutions: Vec<ScgSolution>) -> Option<ScgSolution> {
    let better = |a: &ScgSolution, b: &ScgSolution| {
        (b.converged(), -b.objective) < (a.converged(), -a.objective)
    };
    let mut best: Option<ScgSolution> = None;
    for s in solutions {
        if best.as_ref().map_or(true, |b| better(&s, b)) {
            best = Some(s);
        }
    }
    best
}
