//! The three solver commands: equilibrium solves, gradient checks, and
//! leader optimization. Each writes CSV traces and a JSON solution into the
//! output directory and exits nonzero when its result misses the tolerance
//! it was asked for.

use anyhow::{bail, Result};
use serde::Serialize;

use stackroute::dynamics::{ce_solve, network_path_costs, solve_we, IldConfig, RoutingState};
use stackroute::exec::Workspace;
use stackroute::problems::{Algorithm, ScgProblem};
use stackroute::scg::{best_solution, evaluate_objective, multistart, ScgSolution};
use stackroute::unroll::{backward, fd_gradient, forward_record};

use crate::config::{resolve_problem, InitKind, Overrides};
use crate::output::{write_csv, write_json};

/// Scalar solver parameters echoed into every solution document, so a result
/// file records the configuration that produced it.
#[derive(Serialize)]
struct OptionsEcho {
    r: f64,
    rho: f64,
    eps: f64,
    tau: f64,
    #[serde(rename = "T")]
    t: usize,
    max_inner: usize,
    max_outer: usize,
}

impl OptionsEcho {
    fn of(prob: &ScgProblem) -> Self {
        OptionsEcho {
            r: prob.opts.r,
            rho: prob.opts.rho,
            eps: prob.opts.eps,
            tau: prob.opts.tau,
            t: prob.opts.t_lookahead,
            max_inner: prob.opts.max_inner,
            max_outer: prob.opts.max_outer,
        }
    }
}

#[derive(Serialize)]
struct WeSolution<'a> {
    command: &'a str,
    problem: &'a str,
    alg: Algorithm,
    z: &'a [f64],
    p: &'a [Vec<f64>],
    objective: f64,
    status: &'a str,
    gap: f64,
    iterations: usize,
    options: OptionsEcho,
}

/// Solve the equilibrium twice: once to find it, once more recording the
/// per-iteration gap and the KL divergence to the equilibrium just found
/// (the dynamics are deterministic, so the second pass retraces the first).
pub(crate) fn traced_equilibrium(prob: &ScgProblem, p0: &[Vec<f64>]) -> RoutingState {
    let sink = solve_we(prob, &prob.z0, p0, &prob.ild_config());
    let cfg = IldConfig {
        trace_every: 1,
        reference: Some(sink.p),
        ..prob.ild_config()
    };
    solve_we(prob, &prob.z0, p0, &cfg)
}

fn initial_distribution(prob: &ScgProblem, ov: &Overrides) -> Result<Vec<Vec<f64>>> {
    Ok(match ov.init_kind()? {
        InitKind::Equal => prob.equal_init(),
        InitKind::Random => prob.random_init(ov.seed.unwrap_or(0)).1,
    })
}

pub fn cmd_solve_we(ov: &Overrides) -> Result<()> {
    let prob = resolve_problem(ov)?;
    let alg = ov.algorithm(Algorithm::We)?;
    let out = ov.out_dir(".")?;
    let st = match alg {
        Algorithm::We => {
            let p0 = initial_distribution(&prob, ov)?;
            traced_equilibrium(&prob, &p0)
        }
        Algorithm::Ce => {
            if ov.init_kind()? != InitKind::Equal {
                bail!("the cooperative solve always starts from the equal split");
            }
            let sink = ce_solve(&prob.net, &prob.ps, &prob.model, &prob.ild_config())?;
            let cfg = IldConfig {
                trace_every: 1,
                reference: Some(sink.p),
                ..prob.ild_config()
            };
            ce_solve(&prob.net, &prob.ps, &prob.model, &cfg)?
        }
        other => bail!(
            "`solve-we` computes equilibria; run `solve-scg --alg {}` for leader solvers",
            format!("{other:?}").to_lowercase()
        ),
    };
    let status = if st.converged { "converged" } else { "max_iterations" };
    let objective = match alg {
        // Leader objective at the equilibrium (total time for pricing).
        Algorithm::We => evaluate_objective(&prob, &mut Workspace::new(), &st.p, &prob.z0),
        // The cooperative dynamics run on marginal costs; report the actual
        // total travel time of the resulting single-class assignment.
        _ => {
            let c = network_path_costs(&prob.net, &prob.ps, &prob.model, &st.p[0])?;
            (0..st.p[0].len())
                .map(|k| prob.ps.q[k] * st.p[0][k] * c[k])
                .sum()
        }
    };
    let rows: Vec<String> = st
        .trace
        .iter()
        .map(|t| format!("{},{:e},{:e}", t.iteration, t.gap, t.kl_to_reference))
        .collect();
    write_csv(&out, "we_trace.csv", "iteration,gap,kl_to_reference", &rows)?;
    write_json(
        &out,
        "solution.json",
        &WeSolution {
            command: "solve-we",
            problem: &prob.name,
            alg,
            z: &prob.z0,
            p: &st.p,
            objective,
            status,
            gap: st.gap,
            iterations: st.iterations,
            options: OptionsEcho::of(&prob),
        },
    )?;
    println!(
        "{}: {status} after {} iterations, gap {:e}, objective {}",
        prob.name, st.iterations, st.gap, objective
    );
    if !st.converged {
        bail!("gap {:e} still above eps {:e}", st.gap, prob.opts.eps);
    }
    Ok(())
}

#[derive(Serialize)]
struct GradientReport<'a> {
    problem: &'a str,
    #[serde(rename = "T")]
    t: usize,
    fd_step: f64,
    max_rel_err: f64,
    pass: bool,
}

pub fn cmd_gradient_check(ov: &Overrides) -> Result<()> {
    let prob = resolve_problem(ov)?;
    let out = ov.out_dir(".")?;
    let t = ov.t.unwrap_or(50);
    let fd_step = 1e-6;
    let p0 = initial_distribution(&prob, ov)?;
    let mut rec = forward_record(&prob, &p0, &prob.z0, t);
    let grad = backward(&mut rec);
    let fd = fd_gradient(
        |z| forward_record(&prob, &p0, z, t).objective_value(),
        &prob.z0,
        fd_step,
    );
    let max_rel_err = grad
        .l_z
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let report = GradientReport {
        problem: &prob.name,
        t,
        fd_step,
        max_rel_err,
        pass: max_rel_err <= 1e-5,
    };
    write_json(&out, "gradient_check.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    if !report.pass {
        bail!("reverse-mode and finite-difference gradients disagree: {max_rel_err:e}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SeededSolution {
    seed: u64,
    #[serde(flatten)]
    solution: ScgSolution,
}

#[derive(Serialize)]
struct ScgDocument<'a> {
    command: &'a str,
    problem: &'a str,
    alg: Algorithm,
    seed: Option<u64>,
    z: &'a [f64],
    p: &'a [Vec<f64>],
    objective: f64,
    status: &'a str,
    outer_iterations: usize,
    lower_gap: f64,
    upper_metric: f64,
    options: OptionsEcho,
}

pub fn cmd_solve_scg(ov: &Overrides) -> Result<()> {
    let prob = resolve_problem(ov)?;
    let alg = ov.algorithm(Algorithm::Dol)?;
    if matches!(alg, Algorithm::We | Algorithm::Ce) {
        bail!("`solve-scg` runs leader solvers; use `solve-we` for plain equilibria");
    }
    let out = ov.out_dir(".")?;
    let n = ov.multistart.unwrap_or(1);
    let (solution, seed) = if n <= 1 {
        let p0 = initial_distribution(&prob, ov)?;
        let seed = match ov.init_kind()? {
            InitKind::Random => Some(ov.seed.unwrap_or(0)),
            InitKind::Equal => None,
        };
        (prob.solve_leader(alg, &p0)?, seed)
    } else {
        if ov.init_kind()? == InitKind::Equal && ov.init.is_some() {
            bail!("--multistart varies the random start; drop --init equal");
        }
        let base = ov.seed.unwrap_or(0);
        // The first start runs alone so configuration errors surface before
        // the fan-out; the rest run on the bounded pool.
        let run = |i: u64| {
            let (_, p0) = prob.random_init(base + i);
            prob.solve_leader(alg, &p0)
        };
        let first = run(0)?;
        let rest = multistart(n - 1, |i| {
            run(i as u64 + 1).expect("same configuration as the validated first start")
        })?;
        let all: Vec<ScgSolution> = std::iter::once(first).chain(rest).collect();
        let records: Vec<SeededSolution> = all
            .iter()
            .enumerate()
            .map(|(i, s)| SeededSolution {
                seed: base + i as u64,
                solution: s.clone(),
            })
            .collect();
        write_json(&out, "solutions.json", &records)?;
        let best_at = all
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (!a.converged(), a.objective)
                    .partial_cmp(&(!b.converged(), b.objective))
                    .expect("finite objectives")
            })
            .map(|(i, _)| i)
            .expect("at least one start");
        let best = best_solution(all).expect("at least one start");
        (best, Some(base + best_at as u64))
    };

    let rows: Vec<String> = solution
        .log
        .iter()
        .map(|r| {
            format!(
                "{},{},{:e},{:e},{}",
                r.iter, r.objective, r.lower_gap, r.upper_metric, r.elapsed_s
            )
        })
        .collect();
    write_csv(
        &out,
        "scg_log.csv",
        "iter,objective,lower_gap,upper_metric,elapsed_s",
        &rows,
    )?;
    write_json(
        &out,
        "solution.json",
        &ScgDocument {
            command: "solve-scg",
            problem: &prob.name,
            alg,
            seed,
            z: &solution.z,
            p: &solution.p,
            objective: solution.objective,
            status: &solution.status,
            outer_iterations: solution.outer_iterations,
            lower_gap: solution.lower_gap,
            upper_metric: solution.upper_metric,
            options: OptionsEcho::of(&prob),
        },
    )?;
    println!(
        "{}: {} after {} outer iterations, objective {}, gap {:e}, stationarity {:e}",
        prob.name,
        solution.status,
        solution.outer_iterations,
        solution.objective,
        solution.lower_gap,
        solution.upper_metric
    );
    if !solution.converged() {
        bail!("leader solve stopped at status `{}`", solution.status);
    }
    Ok(())
}
