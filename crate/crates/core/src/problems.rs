//! Concrete leader–follower problems on a road network.
//!
//! Each [`ScgProblem`] bundles a network, an enumerated path set, a cost
//! model, and one decision [`Family`], and implements
//! [`UnrolledModel`](crate::unroll::UnrolledModel) by emitting the family's
//! dynamics layer and objective as executor programs — the same code drives
//! the live equilibrium loop, the recording tape, and therefore the
//! gradients.
//!
//! The four families:
//!
//! * **Pricing** — tolls `z` on a subset of links; travelers see
//!   `u_time + γ·z`, the leader minimizes total travel time (tolls are
//!   transfers). The objective has no explicit `z` term, so single-loop
//!   solves need a lookahead `T ≥ 1`.
//! * **Design** — capacity additions `z` lift BPR capacities to `v0 + z`;
//!   the objective adds a quadratic build cost `β⟨w, z²⟩`.
//! * **Routing control** — the leader fixes route splits `z` of an automated
//!   fleet carrying an `α` share of selected OD pairs; everyone else stays
//!   in the dynamics. The objective is system time over both.
//! * **Mixed-autonomy pricing** — two classes under the pooled revised-BPR
//!   cost with class tolls `z = [β₁; β₂]`; the objective is pooled time.
//!
//! The module also hosts the two experiment heuristics (tollable-link
//! selection and OD-potential ranking), a JSON problem description, and the
//! named desk fixtures used across the test suite and the CLI.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{ClassSpec, CostKind, CostModel};
use crate::dynamics::{
    ce_solve, equal_distribution_init, we_solve, IldConfig, RoutingState,
};
use crate::error::{Error, Result};
use crate::exec::{VecExec, Workspace};
use crate::net::{
    build_braess, build_grid, build_parallel, build_three_node_four_link, build_two_link,
    BraessVariant, Link, Network, OdPair,
};
use crate::paths::{enumerate_paths, PathSet};
use crate::scg::{
    dol_md, evaluate_objective, ioa, sil_md, so_solve, upper_md_step, FeasibleSet, Geometry,
    ScgOptions, ScgSolution, SystemOptimum,
};
use crate::sparse::Incidence;
use crate::unroll::{backward, forward_record, forward_record_adaptive, LayerOut, UnrolledModel};

/// Leader decision family: what `z` means and how it enters the costs.
#[derive(Debug, Clone)]
pub enum Family {
    /// Link tolls; `tollable[a] = false` pins `z_a = 0`.
    Pricing { tollable: Vec<bool> },
    /// Capacity additions with build-cost weights `w` and penalty `β`;
    /// `expandable[a] = false` pins `z_a = 0`.
    Design {
        expandable: Vec<bool>,
        w: Vec<f64>,
        beta: f64,
    },
    /// Route splits of an automated fleet carrying an `alpha` share of each
    /// controlled OD's demand. `p_sel` scatters the compact decision into
    /// the full path space; `q_av` is the fleet demand per path.
    RoutingControl {
        controlled_ods: Vec<usize>,
        alpha: f64,
        p_sel: Arc<Incidence>,
        q_av: Vec<f64>,
    },
    /// Class-specific tolls `z = [β₁; β₂]` (automated; human) under the
    /// pooled revised-BPR cost.
    MixedAutonomyPricing,
}

/// A fully assembled leader–follower problem.
#[derive(Debug, Clone)]
pub struct ScgProblem {
    pub name: String,
    pub net: Network,
    pub ps: PathSet,
    pub model: CostModel,
    pub family: Family,
    pub classes: Vec<ClassSpec>,
    /// Rates, tolerances, geometry, and iteration budgets.
    pub opts: ScgOptions,
    /// Default (feasible) starting decision.
    pub z0: Vec<f64>,
    lambda: Arc<Incidence>,
    sigma: Arc<Incidence>,
    od_ptr: Arc<Vec<usize>>,
    /// Per-class path demand.
    q_class: Vec<Vec<f64>>,
    /// Link free-flow times.
    u0: Vec<f64>,
    /// Affine slopes.
    b_aff: Vec<f64>,
    /// Link capacities.
    v0: Vec<f64>,
    /// BPR quartic coefficients `0.15·u0`.
    k_bpr: Vec<f64>,
    /// Design build-cost weights `β·w` (empty for other families).
    build_w: Vec<f64>,
}

impl ScgProblem {
    fn assemble(
        name: String,
        net: Network,
        ps: PathSet,
        model: CostModel,
        family: Family,
        classes: Vec<ClassSpec>,
        opts: ScgOptions,
        z0: Vec<f64>,
    ) -> Result<Self> {
        net.validate()?;
        let u0: Vec<f64> = net.links.iter().map(|l| l.u0).collect();
        let b_aff: Vec<f64> = net.links.iter().map(|l| l.b).collect();
        let v0: Vec<f64> = net.links.iter().map(|l| l.v0).collect();
        let k_bpr: Vec<f64> = u0.iter().map(|u| 0.15 * u).collect();
        let q_class: Vec<Vec<f64>> = match &family {
            Family::RoutingControl { q_av, .. } => {
                vec![ps.q.iter().zip(q_av).map(|(q, a)| q - a).collect()]
            }
            _ => classes
                .iter()
                .map(|c| ps.q.iter().map(|q| q * c.demand_share).collect())
                .collect(),
        };
        let build_w = match &family {
            Family::Design { w, beta, .. } => w.iter().map(|w| beta * w).collect(),
            _ => Vec::new(),
        };
        let prob = Self {
            name,
            lambda: Arc::new(ps.lambda.clone()),
            sigma: Arc::new(ps.sigma.clone()),
            od_ptr: Arc::new(ps.od_ptr.clone()),
            net,
            ps,
            model,
            family,
            classes,
            opts,
            z0,
            q_class,
            u0,
            b_aff,
            v0,
            k_bpr,
            build_w,
        };
        prob.self_check()?;
        Ok(prob)
    }

    /// Decision dimension.
    pub fn z_dim(&self) -> usize {
        self.z0.len()
    }

    /// Equal-distribution start, one simplex block per class and OD pair.
    pub fn equal_init(&self) -> Vec<Vec<f64>> {
        (0..self.classes.len())
            .map(|_| equal_distribution_init(&self.od_ptr))
            .collect()
    }

    /// Whether the leader objective has an explicit `z` term (at frozen
    /// routes). When it does not, `T = 0` lookaheads carry no gradient, so
    /// single-loop and alternating solvers need anticipation.
    pub fn objective_depends_on_z(&self) -> bool {
        match self.family {
            Family::Pricing { .. } | Family::MixedAutonomyPricing => false,
            Family::Design { .. } | Family::RoutingControl { .. } => true,
        }
    }

    /// Follower solve configuration derived from the problem options.
    pub fn ild_config(&self) -> IldConfig {
        IldConfig {
            r: self.opts.r,
            eps: self.opts.eps,
            max_iters: self.opts.max_inner,
            trace_every: 0,
            reference: None,
        }
    }

    /// Solve the follower equilibrium at a fixed decision.
    pub fn solve_equilibrium(&self, z: &[f64], p0: &[Vec<f64>]) -> RoutingState {
        crate::dynamics::solve_we(self, z, p0, &self.ild_config())
    }

    /// Run one of the leader solvers from `p0` and the default decision.
    pub fn solve_leader(&self, alg: Algorithm, p0: &[Vec<f64>]) -> Result<ScgSolution> {
        match alg {
            Algorithm::Dol => Ok(dol_md(self, &self.opts, &self.z0, p0)),
            Algorithm::Sil => {
                if self.opts.t_lookahead == 0 && !self.objective_depends_on_z() {
                    return Err(Error::InvalidConfig(format!(
                        "single-loop with T = 0 cannot move on `{}`: the objective has no \
                         explicit decision term, so the frozen-routes gradient is zero; \
                         use T >= 1",
                        self.name
                    )));
                }
                Ok(sil_md(self, &self.opts, &self.z0, p0))
            }
            Algorithm::Ioa => {
                if !self.objective_depends_on_z() {
                    return Err(Error::InvalidConfig(format!(
                        "optimization-assignment alternation cannot move on `{}`: minimizing \
                         at frozen routes needs an explicit decision term in the objective",
                        self.name
                    )));
                }
                Ok(ioa(self, &self.opts, &self.z0, p0))
            }
            Algorithm::So => so_solve(self, &self.opts, &self.z0, p0),
            Algorithm::We | Algorithm::Ce => Err(Error::InvalidConfig(
                "equilibrium evaluations have no leader loop; use the equilibrium entry points"
                    .into(),
            )),
        }
    }

    /// Construction-time sanity check: the default decision is feasible and
    /// its projection is idempotent, and both the objective and a recorded
    /// gradient are finite at the equal-distribution start.
    pub fn self_check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.name)));
        if self.opts.r <= 0.0 || self.opts.rho <= 0.0 || self.opts.eps <= 0.0 || self.opts.tau <= 0.0
        {
            return bad("rates and tolerances must be positive".into());
        }
        if !self.opts.feasible.contains(&self.z0, 1e-9) {
            return bad("default decision is infeasible".into());
        }
        let zeros = vec![0.0; self.z0.len()];
        let once = upper_md_step(&self.z0, &zeros, self.opts.rho, &self.opts.feasible, self.opts.geometry);
        let twice = upper_md_step(&once, &zeros, self.opts.rho, &self.opts.feasible, self.opts.geometry);
        let drift = once
            .iter()
            .zip(&twice)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift > 1e-12 {
            return bad(format!("feasible-set projection is not idempotent (drift {drift:.2e})"));
        }
        let p0 = self.equal_init();
        let mut ws = Workspace::new();
        let j = evaluate_objective(self, &mut ws, &p0, &self.z0);
        if !j.is_finite() {
            return bad(format!("objective at the start is not finite ({j})"));
        }
        let mut rec = forward_record(self, &p0, &self.z0, self.opts.t_lookahead.max(1));
        let g = backward(&mut rec);
        if g.l_z.iter().any(|v| !v.is_finite())
            || g.l_p0.iter().flatten().any(|v| !v.is_finite())
        {
            return bad("gradient at the start is not finite".into());
        }
        Ok(())
    }

    /// Objective and equilibrium with every instrument disabled: zero
    /// tolls/expansions, or (for routing control) all demand back in the
    /// dynamics. Returns the objective value and the equilibrium reached.
    pub fn no_intervention(&self) -> Result<(f64, RoutingState)> {
        match &self.family {
            Family::RoutingControl { .. } => {
                let st = we_solve(&self.net, &self.ps, &self.model, &self.ild_config())?;
                let mut x = vec![0.0; self.net.links.len()];
                let f: Vec<f64> =
                    self.ps.q.iter().zip(&st.p[0]).map(|(q, p)| q * p).collect();
                self.ps.lambda.mul(&f, &mut x)?;
                let u = self.model.link_cost(&self.net.links, &x)?;
                Ok((crate::cost::total_travel_time(&u, &x), st))
            }
            _ => {
                let z = vec![0.0; self.z_dim()];
                let st = self.solve_equilibrium(&z, &self.equal_init());
                let mut ws = Workspace::new();
                let j = evaluate_objective(self, &mut ws, &st.p, &z);
                Ok((j, st))
            }
        }
    }

    /// Sample a start for multistart studies: route distributions uniform on
    /// each OD simplex (normalized exponentials), and a decision that is the
    /// default for orthant sets, uniform per simplex block, or uniform in a
    /// box.
    pub fn random_init(&self, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let simplex_block = |out: &mut [f64], rng: &mut ChaCha8Rng| {
            let mut sum = 0.0;
            for v in out.iter_mut() {
                *v = -(1.0 - rng.random::<f64>()).ln();
                sum += *v;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
        };
        let mut p = Vec::new();
        for _ in 0..self.classes.len() {
            let mut pm = vec![0.0; self.ps.n_paths()];
            for w in 0..self.ps.n_od() {
                simplex_block(&mut pm[self.od_ptr[w]..self.od_ptr[w + 1]], &mut rng);
            }
            p.push(pm);
        }
        let z = match &self.opts.feasible {
            FeasibleSet::NonnegOrthant { .. } => self.z0.clone(),
            FeasibleSet::SimplexProducts { groups } => {
                let mut z = vec![0.0; self.z_dim()];
                for &(lo, hi) in groups {
                    simplex_block(&mut z[lo..hi], &mut rng);
                }
                z
            }
            FeasibleSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
        };
        (z, p)
    }

    /// Emit the travel-time chain `x ↦ u_time(x)` for the active cost kind.
    /// `veff` optionally overrides the BPR capacity register (capacity
    /// design); affine costs ignore it.
    fn time_cost<E: VecExec>(&self, e: &mut E, x: usize, veff: Option<usize>) -> usize {
        match self.model.kind {
            CostKind::Affine => {
                let b = e.cons("b", 0, &self.b_aff);
                let bx = e.mul(b, x);
                let a = e.cons("u0", 0, &self.u0);
                e.add(a, bx)
            }
            CostKind::Bpr => {
                let veff = match veff {
                    Some(v) => v,
                    None => e.cons("v0", 0, &self.v0),
                };
                let ratio = e.div(x, veff);
                let r4 = e.powi(ratio, 4);
                let k = e.cons("k_bpr", 0, &self.k_bpr);
                let kr = e.mul(k, r4);
                let a = e.cons("u0", 0, &self.u0);
                e.add(a, kr)
            }
            CostKind::RevisedBpr { .. } => {
                unreachable!("the pooled two-class cost has its own layer")
            }
        }
    }

    /// Emit one imitative-logit update `p ∝ p∘exp(−r·c)` per OD group.
    fn ild_tail<E: VecExec>(&self, e: &mut E, c: usize, p: usize) -> usize {
        let t0 = e.scale(-self.opts.r, c);
        let t1 = e.od_shift_max(&self.od_ptr, t0);
        let ex = e.exp(t1);
        let g = e.mul(ex, p);
        let s = e.spmv(&self.sigma, g);
        let srep = e.spmv_t(&self.sigma, s);
        e.div(g, srep)
    }

    /// Link flows `x = Λ(q∘p)` for one class.
    fn flow<E: VecExec>(&self, e: &mut E, class: usize, p: usize) -> usize {
        let q = e.cons("q", class, &self.q_class[class]);
        let f = e.mul(q, p);
        e.spmv(&self.lambda, f)
    }

    fn pricing_layer<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> LayerOut {
        let x = self.flow(e, 0, p);
        let u_time = self.time_cost(e, x, None);
        let gz = e.scale(self.model.gamma, z);
        let u = e.add(u_time, gz);
        let c = e.spmv_t(&self.lambda, u);
        let p_next = self.ild_tail(e, c, p);
        LayerOut { p_next: vec![p_next], costs: vec![c] }
    }

    fn pricing_objective<E: VecExec>(&self, e: &mut E, p: usize) -> usize {
        let x = self.flow(e, 0, p);
        let u_time = self.time_cost(e, x, None);
        e.dot(u_time, x)
    }

    fn design_veff<E: VecExec>(&self, e: &mut E, z: usize) -> usize {
        let v0 = e.cons("v0", 0, &self.v0);
        e.add(v0, z)
    }

    fn design_layer<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> LayerOut {
        let x = self.flow(e, 0, p);
        let veff = self.design_veff(e, z);
        let u = self.time_cost(e, x, Some(veff));
        let c = e.spmv_t(&self.lambda, u);
        let p_next = self.ild_tail(e, c, p);
        LayerOut { p_next: vec![p_next], costs: vec![c] }
    }

    fn design_objective<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> usize {
        let x = self.flow(e, 0, p);
        let veff = self.design_veff(e, z);
        let u = self.time_cost(e, x, Some(veff));
        let time = e.dot(u, x);
        let z2 = e.mul(z, z);
        let bw = e.cons("build_w", 0, &self.build_w);
        let build = e.dot(bw, z2);
        e.add(time, build)
    }

    /// Total flow `x = Λ(q_free∘p + q_av∘(P_sel·z))` under routing control.
    fn routing_flow<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> usize {
        let Family::RoutingControl { p_sel, q_av, .. } = &self.family else {
            unreachable!("routing flow outside the routing family")
        };
        let q_free = e.cons("q", 0, &self.q_class[0]);
        let f_free = e.mul(q_free, p);
        let z_full = e.spmv(p_sel, z);
        let qa = e.cons("q_av", 0, q_av);
        let f_av = e.mul(qa, z_full);
        let f = e.add(f_free, f_av);
        e.spmv(&self.lambda, f)
    }

    fn routing_layer<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> LayerOut {
        let x = self.routing_flow(e, p, z);
        let u = self.time_cost(e, x, None);
        let c = e.spmv_t(&self.lambda, u);
        let p_next = self.ild_tail(e, c, p);
        LayerOut { p_next: vec![p_next], costs: vec![c] }
    }

    fn routing_objective<E: VecExec>(&self, e: &mut E, p: usize, z: usize) -> usize {
        let x = self.routing_flow(e, p, z);
        let u = self.time_cost(e, x, None);
        e.dot(u, x)
    }

    /// Pooled travel-time chain of the two-class model: total flow, automated
    /// share, capacity gain, and the revised-BPR time. Returns
    /// `(u_time, x_sum)`.
    fn mixed_time<E: VecExec>(&self, e: &mut E, p: &[usize]) -> (usize, usize) {
        let CostKind::RevisedBpr { eta } = self.model.kind else {
            unreachable!("the two-class layer requires the pooled cost")
        };
        let x1 = self.flow(e, 0, p[0]);
        let x2 = self.flow(e, 1, p[1]);
        let xs = e.add(x1, x2);
        let share = e.safe_div(x1, xs);
        let sh2 = e.mul(share, share);
        let esh = e.scale(eta, sh2);
        let gain = e.add_scalar(1.0, esh);
        let v0 = e.cons("v0", 0, &self.v0);
        let veff = e.mul(gain, v0);
        let ratio = e.div(xs, veff);
        let r4 = e.powi(ratio, 4);
        let k = e.cons("k_bpr", 0, &self.k_bpr);
        let kr = e.mul(k, r4);
        let a = e.cons("u0", 0, &self.u0);
        (e.add(a, kr), xs)
    }

    fn mixed_layer<E: VecExec>(&self, e: &mut E, p: &[usize], z: usize) -> LayerOut {
        let (u_time, _xs) = self.mixed_time(e, p);
        let na = self.net.links.len();
        let mut p_next = Vec::with_capacity(2);
        let mut costs = Vec::with_capacity(2);
        for m in 0..2 {
            let beta = e.slice(z, m * na, (m + 1) * na);
            let gb = e.scale(self.model.gamma, beta);
            let um = e.add(u_time, gb);
            let c = e.spmv_t(&self.lambda, um);
            p_next.push(self.ild_tail(e, c, p[m]));
            costs.push(c);
        }
        LayerOut { p_next, costs }
    }

    fn mixed_objective<E: VecExec>(&self, e: &mut E, p: &[usize]) -> usize {
        let (u_time, xs) = self.mixed_time(e, p);
        e.dot(u_time, xs)
    }
}

impl UnrolledModel for ScgProblem {
    fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn od_ptr(&self) -> &[usize] {
        &self.od_ptr
    }

    fn path_demand(&self, class: usize) -> &[f64] {
        &self.q_class[class]
    }

    fn layer<E: VecExec>(&self, e: &mut E, p: &[usize], z: usize) -> LayerOut {
        match &self.family {
            Family::Pricing { .. } => self.pricing_layer(e, p[0], z),
            Family::Design { .. } => self.design_layer(e, p[0], z),
            Family::RoutingControl { .. } => self.routing_layer(e, p[0], z),
            Family::MixedAutonomyPricing => self.mixed_layer(e, p, z),
        }
    }

    fn objective<E: VecExec>(&self, e: &mut E, p: &[usize], z: usize) -> usize {
        match &self.family {
            Family::Pricing { .. } => self.pricing_objective(e, p[0]),
            Family::Design { .. } => self.design_objective(e, p[0], z),
            Family::RoutingControl { .. } => self.routing_objective(e, p[0], z),
            Family::MixedAutonomyPricing => self.mixed_objective(e, p),
        }
    }
}

impl SystemOptimum for ScgProblem {
    fn marginal_path_costs(&self, p: &[Vec<f64>], z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let na = self.net.links.len();
        let to_paths = |mc: &[f64]| -> Result<Vec<f64>> {
            let mut c = vec![0.0; self.ps.n_paths()];
            self.ps.lambda.mul_t(mc, &mut c)?;
            Ok(c)
        };
        match &self.family {
            Family::Pricing { .. } => {
                let x = self.link_flow_single(&p[0], None)?;
                let mc = self.model.marginal_link_cost(&self.net.links, &x)?;
                Ok(vec![to_paths(&mc)?])
            }
            Family::Design { .. } => {
                let x = self.link_flow_single(&p[0], None)?;
                let mut mc = vec![0.0; na];
                for a in 0..na {
                    let veff = self.v0[a] + z[a];
                    let r = x[a] / veff;
                    let u = self.u0[a] * (1.0 + 0.15 * r.powi(4));
                    let du = 0.6 * self.u0[a] * x[a].powi(3) / veff.powi(4);
                    mc[a] = u + x[a] * du;
                }
                Ok(vec![to_paths(&mc)?])
            }
            Family::RoutingControl { p_sel, q_av, .. } => {
                let mut z_full = vec![0.0; self.ps.n_paths()];
                p_sel.mul(z, &mut z_full)?;
                let f_av: Vec<f64> = q_av.iter().zip(&z_full).map(|(q, z)| q * z).collect();
                let x = self.link_flow_single(&p[0], Some(&f_av))?;
                let mc = self.model.marginal_link_cost(&self.net.links, &x)?;
                Ok(vec![to_paths(&mc)?])
            }
            Family::MixedAutonomyPricing => Err(Error::InvalidModel(
                "marginal costs of the pooled two-class model are not available; the \
                 system-optimum driver covers pricing, design, and routing control"
                    .into(),
            )),
        }
    }
}

impl ScgProblem {
    /// Link flows of the (single) dynamics class, plus an optional extra
    /// path-flow term.
    fn link_flow_single(&self, p: &[f64], extra: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut f: Vec<f64> = self.q_class[0].iter().zip(p).map(|(q, p)| q * p).collect();
        if let Some(extra) = extra {
            for (f, e) in f.iter_mut().zip(extra) {
                *f += e;
            }
        }
        let mut x = vec![0.0; self.net.links.len()];
        self.ps.lambda.mul(&f, &mut x)?;
        Ok(x)
    }
}

/// Solver selector shared by the CLI and the experiment drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    We,
    Ce,
    Dol,
    Sil,
    Ioa,
    So,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "we" => Ok(Algorithm::We),
            "ce" => Ok(Algorithm::Ce),
            "dol" => Ok(Algorithm::Dol),
            "sil" => Ok(Algorithm::Sil),
            "ioa" => Ok(Algorithm::Ioa),
            "so" => Ok(Algorithm::So),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected we|ce|dol|sil|ioa|so)"
            ))),
        }
    }
}

fn default_opts(feasible: FeasibleSet, geometry: Geometry) -> ScgOptions {
    ScgOptions {
        r: 0.2,
        rho: 0.02,
        eps: 1e-8,
        tau: 1e-6,
        t_lookahead: 1,
        max_outer: 20_000,
        max_inner: 200_000,
        feasible,
        geometry,
        safeguard_halving: false,
    }
}

/// Congestion pricing: tolls on `tollable` links, total travel time as the
/// objective (squared-Euclidean geometry on the nonnegative orthant).
pub fn make_pricing(
    net: Network,
    ps: PathSet,
    kind: CostKind,
    gamma: f64,
    tollable: Vec<bool>,
) -> Result<ScgProblem> {
    let na = net.links.len();
    if tollable.len() != na {
        return Err(Error::InvalidConfig(format!(
            "tollable mask has {} entries for {na} links",
            tollable.len()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidConfig("time value of money must be nonnegative".into()));
    }
    let fixed_zero: Vec<bool> = tollable.iter().map(|t| !t).collect();
    let opts = default_opts(
        FeasibleSet::NonnegOrthant { fixed_zero },
        Geometry::Euclidean,
    );
    ScgProblem::assemble(
        "pricing".into(),
        net,
        ps,
        CostModel { kind, gamma },
        Family::Pricing { tollable },
        vec![ClassSpec { name: "all".into(), demand_share: 1.0 }],
        opts,
        vec![0.0; na],
    )
}

/// Capacity design: BPR capacities lifted to `v0 + z` on `expandable` links,
/// objective = total time + `β⟨w, z²⟩` (squared-Euclidean geometry).
pub fn make_design(
    net: Network,
    ps: PathSet,
    expandable: Vec<bool>,
    w: Vec<f64>,
    beta: f64,
) -> Result<ScgProblem> {
    let na = net.links.len();
    if expandable.len() != na || w.len() != na {
        return Err(Error::InvalidConfig(format!(
            "expandable/weight vectors must have one entry per link ({na})"
        )));
    }
    if beta < 0.0 || w.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidConfig("build-cost weights must be nonnegative".into()));
    }
    let fixed_zero: Vec<bool> = expandable.iter().map(|e| !e).collect();
    let opts = default_opts(
        FeasibleSet::NonnegOrthant { fixed_zero },
        Geometry::Euclidean,
    );
    ScgProblem::assemble(
        "design".into(),
        net,
        ps,
        CostModel { kind: CostKind::Bpr, gamma: 0.0 },
        Family::Design { expandable, w, beta },
        vec![ClassSpec { name: "all".into(), demand_share: 1.0 }],
        opts,
        vec![0.0; na],
    )
}

/// Stackelberg routing: the leader routes an `alpha` share of each controlled
/// OD's demand; the rest follows the dynamics (entropic geometry on per-OD
/// simplices).
pub fn make_routing_control(
    net: Network,
    ps: PathSet,
    kind: CostKind,
    controlled_ods: Vec<usize>,
    alpha: f64,
) -> Result<ScgProblem> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "controlled share must lie in [0, 1], got {alpha}"
        )));
    }
    let mut ods = controlled_ods;
    ods.sort_unstable();
    ods.dedup();
    if ods.iter().any(|w| *w >= ps.n_od()) {
        return Err(Error::InvalidConfig("controlled OD index out of range".into()));
    }
    if ods.is_empty() {
        return Err(Error::InvalidConfig("routing control needs at least one controlled OD".into()));
    }
    let mut q_av = vec![0.0; ps.n_paths()];
    let mut cols: Vec<Vec<usize>> = Vec::new();
    let mut groups = Vec::new();
    let mut z0 = Vec::new();
    for &w in &ods {
        let (lo, hi) = (ps.od_ptr[w], ps.od_ptr[w + 1]);
        groups.push((cols.len(), cols.len() + (hi - lo)));
        for k in lo..hi {
            q_av[k] = alpha * ps.q[k];
            cols.push(vec![k]);
            z0.push(1.0 / (hi - lo) as f64);
        }
    }
    let p_sel = Arc::new(Incidence::from_columns(ps.n_paths(), &cols)?);
    let opts = default_opts(
        FeasibleSet::SimplexProducts { groups },
        Geometry::Entropic,
    );
    ScgProblem::assemble(
        "routing_control".into(),
        net,
        ps,
        CostModel { kind, gamma: 0.0 },
        Family::RoutingControl { controlled_ods: ods, alpha, p_sel, q_av },
        vec![ClassSpec { name: "free".into(), demand_share: 1.0 }],
        opts,
        z0,
    )
}

/// Two-class pricing under the pooled revised-BPR cost: automated share
/// `alpha`, capacity-gain coefficient `eta`, class tolls `z = [β₁; β₂]` with
/// per-class tollable masks.
pub fn make_mixed_autonomy_pricing(
    net: Network,
    ps: PathSet,
    eta: f64,
    gamma: f64,
    alpha: f64,
    tollable_av: Vec<bool>,
    tollable_hdv: Vec<bool>,
) -> Result<ScgProblem> {
    let na = net.links.len();
    if tollable_av.len() != na || tollable_hdv.len() != na {
        return Err(Error::InvalidConfig(format!(
            "tollable masks must have one entry per link ({na})"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "automated share must lie in [0, 1], got {alpha}"
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidConfig("capacity-gain coefficient must be nonnegative".into()));
    }
    let fixed_zero: Vec<bool> = tollable_av
        .iter()
        .chain(&tollable_hdv)
        .map(|t| !t)
        .collect();
    let opts = default_opts(
        FeasibleSet::NonnegOrthant { fixed_zero },
        Geometry::Euclidean,
    );
    ScgProblem::assemble(
        "mixed_autonomy_pricing".into(),
        net,
        ps,
        CostModel { kind: CostKind::RevisedBpr { eta }, gamma },
        Family::MixedAutonomyPricing,
        vec![
            ClassSpec { name: "automated".into(), demand_share: alpha },
            ClassSpec { name: "human".into(), demand_share: 1.0 - alpha },
        ],
        opts,
        vec![0.0; 2 * na],
    )
}

/// Which flow normalizes the WE/CE discrepancy in [`select_tollable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscrepancyBase {
    /// `|x_WE − x_CE| / x_CE` (the default convention here).
    CeFlow,
    /// `|x_WE − x_CE| / x_WE`.
    WeFlow,
}

/// Pick tollable links by relative WE/CE flow discrepancy: a link is selected
/// when `|x_WE − x_CE| / x_base > ξ`. Links that the base equilibrium leaves
/// empty are selected whenever the other equilibrium uses them at all (the
/// ratio is infinite).
pub fn select_tollable(
    net: &Network,
    ps: &PathSet,
    model: &CostModel,
    xi: f64,
    base: DiscrepancyBase,
    cfg: &IldConfig,
) -> Result<Vec<bool>> {
    if xi <= 0.0 {
        return Err(Error::InvalidConfig("discrepancy threshold must be positive".into()));
    }
    let flows = |st: &RoutingState| -> Result<Vec<f64>> {
        let f: Vec<f64> = ps.q.iter().zip(&st.p[0]).map(|(q, p)| q * p).collect();
        let mut x = vec![0.0; net.links.len()];
        ps.lambda.mul(&f, &mut x)?;
        Ok(x)
    };
    let x_we = flows(&we_solve(net, ps, model, cfg)?)?;
    let x_ce = flows(&ce_solve(net, ps, model, cfg)?)?;
    Ok(x_we
        .iter()
        .zip(&x_ce)
        .map(|(we, ce)| {
            let denom = match base {
                DiscrepancyBase::CeFlow => *ce,
                DiscrepancyBase::WeFlow => *we,
            };
            let diff = (we - ce).abs();
            if denom.abs() <= 1e-12 {
                diff > 1e-12
            } else {
                diff / denom > xi
            }
        })
        .collect())
}

/// Rank OD pairs by how much one controlled-routing descent step on that OD
/// alone improves total travel time.
///
/// Builds a routing-control problem over all OD pairs with automated share
/// `alpha`, starts the fleet at the plain-equilibrium split, records one
/// forward solve to tolerance plus one backward sweep (no leader step), and
/// then scores each OD by the objective drop after an entropic step, with the
/// problem's `ρ`, restricted to that OD's block. Descending scores; fully
/// deterministic.
pub fn rank_od_potential(
    net: &Network,
    ps: &PathSet,
    kind: CostKind,
    alpha: f64,
) -> Result<Vec<(usize, f64)>> {
    let model = CostModel { kind, gamma: 0.0 };
    let prob = make_routing_control(
        net.clone(),
        ps.clone(),
        kind,
        (0..ps.n_od()).collect(),
        alpha,
    )?;
    let we = we_solve(net, ps, &model, &prob.ild_config())?;
    // With every OD controlled the decision space is the full path space, so
    // the plain-equilibrium split is itself a feasible decision.
    let z0 = we.p[0].clone();
    let p0 = vec![we.p[0].clone()];
    let mut rec =
        forward_record_adaptive(&prob, &p0, &z0, prob.opts.eps, prob.opts.max_inner);
    let grad = backward(&mut rec);
    let j0 = grad.value;
    let p_final = rec.p_final_values();
    let mut ws = Workspace::new();
    let mut scored: Vec<(usize, f64)> = (0..ps.n_od())
        .map(|w| {
            let (lo, hi) = (ps.od_ptr[w], ps.od_ptr[w + 1]);
            let mut z = z0.clone();
            let shift = grad.l_z[lo..hi].iter().fold(f64::INFINITY, |m, g| m.min(*g));
            let mut sum = 0.0;
            for k in lo..hi {
                z[k] = z0[k] * (-prob.opts.rho * (grad.l_z[k] - shift)).exp();
                sum += z[k];
            }
            for v in &mut z[lo..hi] {
                *v /= sum;
            }
            let j = evaluate_objective(&prob, &mut ws, &p_final, &z);
            (w, j0 - j)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// Remaining share of the selfish-routing inefficiency:
/// `(objective − CE) / (WE − CE)`. Zero at the cooperative optimum, one at
/// the plain equilibrium.
pub fn remaining_gap(objective: f64, we_objective: f64, ce_objective: f64) -> f64 {
    (objective - ce_objective) / (we_objective - ce_objective)
}

/// Optional solver-parameter overrides accepted inside [`ProblemSpec`]
/// params (and overridden in turn by CLI flags).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TuneParams {
    pub r: Option<f64>,
    pub rho: Option<f64>,
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    #[serde(rename = "T")]
    pub t_lookahead: Option<usize>,
    pub max_inner: Option<usize>,
    pub max_outer: Option<usize>,
    /// `"euclidean"` or `"entropic"`.
    pub geometry: Option<String>,
}

impl TuneParams {
    pub fn apply(&self, opts: &mut ScgOptions) -> Result<()> {
        if let Some(r) = self.r {
            opts.r = r;
        }
        if let Some(rho) = self.rho {
            opts.rho = rho;
        }
        if let Some(eps) = self.eps {
            opts.eps = eps;
        }
        if let Some(tau) = self.tau {
            opts.tau = tau;
        }
        if let Some(t) = self.t_lookahead {
            opts.t_lookahead = t;
        }
        if let Some(n) = self.max_inner {
            opts.max_inner = n;
        }
        if let Some(n) = self.max_outer {
            opts.max_outer = n;
        }
        match self.geometry.as_deref() {
            None => {}
            Some("euclidean") => opts.geometry = Geometry::Euclidean,
            Some("entropic") => opts.geometry = Geometry::Entropic,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown geometry `{other}` (expected euclidean|entropic)"
                )))
            }
        }
        Ok(())
    }
}

fn parse_kind(s: Option<&str>) -> Result<CostKind> {
    match s.unwrap_or("affine") {
        "affine" => Ok(CostKind::Affine),
        "bpr" => Ok(CostKind::Bpr),
        other => Err(Error::InvalidConfig(format!(
            "unknown cost kind `{other}` (expected affine|bpr)"
        ))),
    }
}

/// JSON description of a problem: family, family parameters, a network
/// reference (builtin name, a network-JSON file path, or a TNTP link file
/// path), the per-OD path budget, and optional multistart seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Value,
    pub network_ref: String,
    /// Trips file for a TNTP `network_ref`; defaults to the conventional
    /// sibling name (`*_net.tntp` → `*_trips.tntp`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trips_ref: Option<String>,
    pub path_k: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Deserialize)]
struct PricingParams {
    kind: Option<String>,
    gamma: Option<f64>,
    tollable: Option<Vec<bool>>,
    #[serde(flatten)]
    tune: TuneParams,
}

#[derive(Debug, Deserialize)]
struct DesignParams {
    expandable: Option<Vec<bool>>,
    w: Option<Vec<f64>>,
    beta: f64,
    #[serde(flatten)]
    tune: TuneParams,
}

#[derive(Debug, Deserialize)]
struct RoutingParams {
    kind: Option<String>,
    controlled_ods: Option<Vec<usize>>,
    alpha: f64,
    #[serde(flatten)]
    tune: TuneParams,
}

#[derive(Debug, Deserialize)]
struct MixedParams {
    eta: f64,
    gamma: Option<f64>,
    alpha: f64,
    tollable_av: Option<Vec<bool>>,
    tollable_hdv: Option<Vec<bool>>,
    #[serde(flatten)]
    tune: TuneParams,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("problem description: {e}"),
        })
    }

    /// Read a TNTP network/trips pair. The trips file is `trips_ref` if
    /// given, otherwise derived from the link file by the distribution
    /// convention `<name>_net.tntp` → `<name>_trips.tntp`.
    fn load_tntp(&self) -> Result<Network> {
        let trips_path = match &self.trips_ref {
            Some(path) => path.clone(),
            None if self.network_ref.ends_with("_net.tntp") => self
                .network_ref
                .strip_suffix("_net.tntp")
                .expect("checked suffix")
                .to_string()
                + "_trips.tntp",
            None => {
                return Err(Error::InvalidConfig(format!(
                    "network_ref `{}` does not end in `_net.tntp`; set trips_ref to the trips file",
                    self.network_ref
                )))
            }
        };
        let read = |path: &str| {
            std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidConfig(format!("cannot read TNTP file `{path}`: {e}"))
            })
        };
        crate::tntp::parse_tntp(&read(&self.network_ref)?, &read(&trips_path)?)
    }

    /// Resolve the network reference and assemble the problem.
    pub fn build(&self) -> Result<ScgProblem> {
        let net = if self.network_ref.ends_with(".tntp") {
            self.load_tntp()?
        } else {
            match fixture_network(&self.network_ref) {
                Ok(net) => net,
                Err(_) => {
                    let text = std::fs::read_to_string(&self.network_ref).map_err(|e| {
                        Error::InvalidConfig(format!(
                            "network_ref `{}` is neither a builtin network nor a readable file: {e}",
                            self.network_ref
                        ))
                    })?;
                    Network::from_json(&text)?
                }
            }
        };
        let ps = enumerate_paths(&net, self.path_k)?;
        let na = net.links.len();
        let params = self.params.clone();
        let from_value = |what: &str, e: serde_json::Error| {
            Error::InvalidConfig(format!("{what} params: {e}"))
        };
        let mut prob = match self.family.as_str() {
            "pricing" => {
                let p: PricingParams =
                    serde_json::from_value(params).map_err(|e| from_value("pricing", e))?;
                let kind = parse_kind(p.kind.as_deref())?;
                let mut prob = make_pricing(
                    net,
                    ps,
                    kind,
                    p.gamma.unwrap_or(1.0),
                    p.tollable.unwrap_or_else(|| vec![true; na]),
                )?;
                p.tune.apply(&mut prob.opts)?;
                prob
            }
            "design" => {
                let p: DesignParams =
                    serde_json::from_value(params).map_err(|e| from_value("design", e))?;
                let w = p
                    .w
                    .unwrap_or_else(|| net.links.iter().map(|l| l.u0.max(0.1)).collect());
                let mut prob = make_design(
                    net,
                    ps,
                    p.expandable.unwrap_or_else(|| vec![true; na]),
                    w,
                    p.beta,
                )?;
                p.tune.apply(&mut prob.opts)?;
                prob
            }
            "routing_control" => {
                let p: RoutingParams =
                    serde_json::from_value(params).map_err(|e| from_value("routing_control", e))?;
                let kind = parse_kind(p.kind.as_deref())?;
                let n_od = ps.n_od();
                let mut prob = make_routing_control(
                    net,
                    ps,
                    kind,
                    p.controlled_ods.unwrap_or_else(|| (0..n_od).collect()),
                    p.alpha,
                )?;
                p.tune.apply(&mut prob.opts)?;
                prob
            }
            "mixed_autonomy_pricing" => {
                let p: MixedParams =
                    serde_json::from_value(params).map_err(|e| from_value("mixed_autonomy", e))?;
                let mut prob = make_mixed_autonomy_pricing(
                    net,
                    ps,
                    p.eta,
                    p.gamma.unwrap_or(1.0),
                    p.alpha,
                    p.tollable_av.unwrap_or_else(|| vec![true; na]),
                    p.tollable_hdv.unwrap_or_else(|| vec![true; na]),
                )?;
                p.tune.apply(&mut prob.opts)?;
                prob
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown family `{other}` (expected pricing|design|routing_control|\
                     mixed_autonomy_pricing)"
                )))
            }
        };
        prob.name = format!("{}:{}", self.family, self.network_ref);
        prob.self_check()?;
        Ok(prob)
    }
}

/// A builtin network by name: `two_link`, `braess`, `braess_no_bridge`,
/// `three_node`, `two_link_bpr`, `braess_bpr`, `parallel:N`, or `grid:RxC`.
pub fn fixture_network(name: &str) -> Result<Network> {
    if let Some(n) = name.strip_prefix("parallel:") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad parallel size in `{name}`")))?;
        return build_parallel(n, n as f64);
    }
    if let Some(dims) = name.strip_prefix("grid:") {
        let (r, c) = dims
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
            .ok_or_else(|| Error::InvalidConfig(format!("bad grid size in `{name}` (want RxC)")))?;
        return build_grid(r, c);
    }
    match name {
        "two_link" => Ok(build_two_link()),
        "braess" => Ok(build_braess(BraessVariant::WithBridge)),
        "braess_no_bridge" => Ok(build_braess(BraessVariant::WithoutBridge)),
        "three_node" => Ok(build_three_node_four_link()),
        "two_link_bpr" => Ok(two_link_bpr_network()),
        "braess_bpr" => Ok(braess_bpr_network()),
        "two_od" => Ok(two_od_network()),
        other => Err(Error::InvalidConfig(format!("unknown builtin network `{other}`"))),
    }
}

/// Two disjoint OD pairs with very different selfish inefficiency: OD 0
/// rides the textbook asymmetric pair (`1 + x` vs `2 + x`), OD 1 a nearly
/// symmetric lightly congested pair (`2 + x/4` vs `2.05 + x/4`). Routing
/// control on OD 0 can recover about 0.125 of total time, on OD 1 only
/// about 0.00125, so ranking heuristics should put OD 0 far ahead.
fn two_od_network() -> Network {
    let mk = |tail: usize, head: usize, u0: f64, b: f64| Link {
        tail,
        head,
        u0,
        v0: 1.0,
        b,
        bpr_b: None,
        bpr_power: None,
    };
    Network {
        nodes: 4,
        links: vec![
            mk(0, 1, 1.0, 1.0),
            mk(0, 1, 2.0, 1.0),
            mk(2, 3, 2.0, 0.25),
            mk(2, 3, 2.05, 0.25),
        ],
        od: vec![
            OdPair { o: 0, d: 1, demand: 4.0 },
            OdPair { o: 2, d: 3, demand: 4.0 },
        ],
    }
}

/// Two parallel links with BPR costs, tuned so the dynamics contract fast
/// enough for deep-lookahead gradient checks.
fn two_link_bpr_network() -> Network {
    let mk = |u0: f64, v0: f64| Link {
        tail: 0,
        head: 1,
        u0,
        v0,
        b: 0.0,
        bpr_b: None,
        bpr_power: None,
    };
    Network {
        nodes: 2,
        links: vec![mk(1.0, 2.0), mk(2.0, 2.5)],
        od: vec![crate::net::OdPair { o: 0, d: 1, demand: 3.0 }],
    }
}

/// The Braess diamond with BPR costs: congestible outer links (0, 4), wide
/// bypass links (1, 2), and a fast narrow bridge (3). At the plain
/// equilibrium the bridge attracts flow it should not: total time drops when
/// the bridge is closed, which makes the network the standard stress test
/// for capacity design.
fn braess_bpr_network() -> Network {
    let mk = |tail: usize, head: usize, u0: f64, v0: f64| Link {
        tail,
        head,
        u0,
        v0,
        b: 0.0,
        bpr_b: None,
        bpr_power: None,
    };
    Network {
        nodes: 4,
        links: vec![
            mk(0, 1, 1.0, 2.0),
            mk(0, 2, 6.0, 6.0),
            mk(1, 3, 6.0, 6.0),
            mk(1, 2, 0.5, 3.0),
            mk(2, 3, 1.0, 2.0),
        ],
        od: vec![crate::net::OdPair { o: 0, d: 3, demand: 6.0 }],
    }
}

/// A named desk problem. Every fixture documents its tuned rates inline;
/// they are the values the acceptance suite runs at.
pub fn fixture(name: &str) -> Result<ScgProblem> {
    let pricing_on = |net: Network, tollable: Option<Vec<bool>>| -> Result<ScgProblem> {
        let ps = enumerate_paths(&net, 8)?;
        let na = net.links.len();
        make_pricing(
            net,
            ps,
            CostKind::Affine,
            1.0,
            tollable.unwrap_or_else(|| vec![true; na]),
        )
    };
    match name {
        // Plain equilibrium fixtures (pricing shells with zero default
        // tolls; solving the equilibrium at z0 is the plain game).
        "two_link" => {
            let mut prob = pricing_on(fixture_network("two_link")?, None)?;
            prob.name = "two_link".into();
            prob.opts.r = 0.5;
            prob.opts.eps = 1e-10;
            Ok(prob)
        }
        "braess" => {
            let mut prob = pricing_on(fixture_network("braess")?, None)?;
            prob.name = "braess".into();
            prob.opts.r = 0.01;
            prob.opts.eps = 1e-9;
            Ok(prob)
        }
        "braess_no_bridge" => {
            let mut prob = pricing_on(fixture_network("braess_no_bridge")?, None)?;
            prob.name = "braess_no_bridge".into();
            prob.opts.r = 0.01;
            prob.opts.eps = 1e-9;
            Ok(prob)
        }
        "three_node" => {
            let mut prob = pricing_on(fixture_network("three_node")?, None)?;
            prob.name = "three_node".into();
            prob.opts.r = 0.3;
            Ok(prob)
        }
        // Leader fixtures.
        "two_link_pricing" => {
            let mut prob = pricing_on(fixture_network("two_link")?, None)?;
            prob.name = "two_link_pricing".into();
            prob.opts.r = 0.5;
            prob.opts.rho = 0.05;
            prob.opts.eps = 1e-10;
            prob.opts.tau = 1e-8;
            prob.opts.t_lookahead = 25;
            Ok(prob)
        }
        "two_link_design" => {
            let net = fixture_network("two_link_bpr")?;
            let ps = enumerate_paths(&net, 4)?;
            let w = vec![1.0, 1.0];
            let mut prob = make_design(net, ps, vec![true, true], w, 0.5)?;
            prob.name = "two_link_design".into();
            prob.opts.r = 1.5;
            prob.opts.rho = 0.05;
            prob.opts.tau = 1e-7;
            Ok(prob)
        }
        "two_link_routing" => {
            let net = fixture_network("two_link")?;
            let ps = enumerate_paths(&net, 4)?;
            let mut prob =
                make_routing_control(net, ps, CostKind::Affine, vec![0], 0.2)?;
            prob.name = "two_link_routing".into();
            prob.opts.r = 0.5;
            prob.opts.rho = 0.1;
            Ok(prob)
        }
        "two_od_routing" => {
            let net = fixture_network("two_od")?;
            let ps = enumerate_paths(&net, 4)?;
            let mut prob =
                make_routing_control(net, ps, CostKind::Affine, vec![0, 1], 0.2)?;
            prob.name = "two_od_routing".into();
            prob.opts.r = 0.5;
            prob.opts.rho = 0.1;
            Ok(prob)
        }
        "two_link_mixed" => {
            let net = fixture_network("two_link_bpr")?;
            let ps = enumerate_paths(&net, 4)?;
            let mut prob = make_mixed_autonomy_pricing(
                net,
                ps,
                1.0,
                1.0,
                0.2,
                vec![true, true],
                vec![true, true],
            )?;
            prob.name = "two_link_mixed".into();
            prob.opts.r = 2.5;
            prob.opts.rho = 0.05;
            Ok(prob)
        }
        "braess_design" | "braess_design_all" => {
            let net = fixture_network("braess_bpr")?;
            let ps = enumerate_paths(&net, 4)?;
            // Scenario "braess_design" forbids expanding the bridge (link
            // 3); the "_all" variant relaxes that and admits every link.
            let expandable = if name == "braess_design" {
                vec![true, true, true, false, true]
            } else {
                vec![true; 5]
            };
            let w: Vec<f64> = net.links.iter().map(|l| l.u0).collect();
            let mut prob = make_design(net, ps, expandable, w, 1.0)?;
            prob.name = name.into();
            prob.opts.r = 0.4;
            prob.opts.rho = 0.05;
            prob.opts.eps = 1e-8;
            prob.opts.tau = 1e-4;
            Ok(prob)
        }
        "braess_mixed" => {
            let net = fixture_network("braess_bpr")?;
            let ps = enumerate_paths(&net, 4)?;
            let mut prob = make_mixed_autonomy_pricing(
                net,
                ps,
                1.0,
                1.0,
                0.2,
                vec![true; 5],
                vec![true; 5],
            )?;
            prob.name = "braess_mixed".into();
            prob.opts.r = 0.4;
            prob.opts.rho = 0.02;
            Ok(prob)
        }
        other => {
            if other.starts_with("parallel:") {
                // Every link is its own path: assemble the routes directly
                // instead of paying for enumeration at large widths.
                let net = fixture_network(other)?;
                let na = net.links.len();
                let ps = PathSet::from_paths(&net, &[(0..na).map(|l| vec![l]).collect()])?;
                let mut prob =
                    make_pricing(net, ps, CostKind::Affine, 1.0, vec![true; na])?;
                prob.name = other.into();
                prob.opts.r = 0.3;
                return Ok(prob);
            }
            if other.starts_with("grid:") {
                let mut prob = pricing_on(fixture_network(other)?, None)?;
                prob.name = other.into();
                prob.opts.r = 0.3;
                return Ok(prob);
            }
            Err(Error::InvalidConfig(format!("unknown fixture `{other}`")))
        }
    }
}

/// Names accepted by [`fixture`] (without the parameterized families).
pub const FIXTURE_NAMES: &[&str] = &[
    "two_link",
    "braess",
    "braess_no_bridge",
    "three_node",
    "two_link_pricing",
    "two_link_design",
    "two_link_routing",
    "two_od_routing",
    "two_link_mixed",
    "braess_design",
    "braess_design_all",
    "braess_mixed",
];
