//! Experiment presets: canned sweeps that write a small report directory
//! (CSV data plus a `report.json` verdict). Every preset is deterministic
//! given its seed; wall-clock columns are the only bytes that vary.

use std::time::Instant;

use anyhow::{bail, Result};
use serde_json::json;

use stackroute::exec::Workspace;
use stackroute::problems::{
    fixture, rank_od_potential, remaining_gap, select_tollable, Algorithm, DiscrepancyBase,
    ScgProblem,
};
use stackroute::scg::{evaluate_objective, multistart, ScgSolution};
use stackroute::unroll::{backward, count_report, fd_gradient, forward_record};

use crate::commands::traced_equilibrium;
use crate::config::{apply_tuning, resolve_problem, Overrides};
use crate::output::{write_csv, write_json};

pub const PRESETS: &[&str] = &[
    "convergence",
    "multi-equilibria",
    "gradient-depth",
    "opcount",
    "scaling",
    "design-bench",
    "tollable",
    "od-ranking",
];

pub fn run_preset(preset: &str, ov: &Overrides) -> Result<()> {
    match preset {
        "convergence" => convergence(ov),
        "multi-equilibria" => multi_equilibria(ov),
        "gradient-depth" => gradient_depth(ov),
        "opcount" => opcount(ov),
        "scaling" => scaling(ov),
        "design-bench" => design_bench(ov),
        "tollable" => tollable(ov),
        "od-ranking" => od_ranking(ov),
        other => bail!("unknown preset `{other}` (expected {})", PRESETS.join("|")),
    }
}

/// The preset's subject: whatever `--problem`/`--fixture` names, or the
/// preset's canonical fixture, with the tuning flags applied either way.
fn problem_or(ov: &Overrides, default_fixture: &str) -> Result<ScgProblem> {
    if ov.problem.is_some() || ov.fixture.is_some() {
        resolve_problem(ov)
    } else {
        let mut prob = fixture(default_fixture)?;
        apply_tuning(&mut prob, ov);
        Ok(prob)
    }
}

/// Equilibrium convergence from the equal split and from seeded random
/// starts: per-iteration gap and KL-to-equilibrium traces per run.
fn convergence(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/convergence")?;
    let problems: Vec<ScgProblem> = if ov.problem.is_some() || ov.fixture.is_some() {
        vec![resolve_problem(ov)?]
    } else {
        ["two_link", "braess"]
            .iter()
            .map(|n| {
                let mut p = fixture(n)?;
                apply_tuning(&mut p, ov);
                Ok(p)
            })
            .collect::<Result<_>>()?
    };
    let base = ov.seed.unwrap_or(0);
    let mut runs = Vec::new();
    let mut all_converged = true;
    for prob in &problems {
        let starts: Vec<(String, Vec<Vec<f64>>)> = std::iter::once(("equal".into(), prob.equal_init()))
            .chain((0..3).map(|i| (format!("seed{}", base + i), prob.random_init(base + i).1)))
            .collect();
        for (tag, p0) in starts {
            let st = traced_equilibrium(prob, &p0);
            let rows: Vec<String> = st
                .trace
                .iter()
                .map(|t| format!("{},{:e},{:e}", t.iteration, t.gap, t.kl_to_reference))
                .collect();
            write_csv(
                &out,
                &format!("{}_{}_trace.csv", prob.name, tag),
                "iteration,gap,kl_to_reference",
                &rows,
            )?;
            all_converged &= st.converged;
            runs.push(json!({
                "problem": prob.name,
                "start": tag,
                "iterations": st.iterations,
                "gap": st.gap,
                "converged": st.converged,
            }));
        }
    }
    write_json(&out, "report.json", &json!({ "runs": runs, "all_converged": all_converged }))?;
    if !all_converged {
        bail!("some starts did not reach the gap tolerance");
    }
    Ok(())
}

/// Many equilibria of one game: solve from `--multistart` seeded random
/// starts and histogram the total travel times the dynamics settle on.
fn multi_equilibria(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/multi-equilibria")?;
    let prob = problem_or(ov, "braess_mixed")?;
    let n = ov.multistart.unwrap_or(100);
    let base = ov.seed.unwrap_or(0);
    let sols = multistart(n, |i| {
        let (_, p0) = prob.random_init(base + i as u64);
        let st = prob.solve_equilibrium(&prob.z0, &p0);
        let objective = evaluate_objective(&prob, &mut Workspace::new(), &st.p, &prob.z0);
        ScgSolution {
            z: prob.z0.clone(),
            p: st.p,
            objective,
            status: if st.converged { "converged" } else { "max_iterations" }.into(),
            outer_iterations: st.iterations,
            lower_gap: st.gap,
            upper_metric: 0.0,
            log: Vec::new(),
        }
    })?;
    let rows: Vec<String> = sols
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{},{},{:e},{},{}",
                base + i as u64,
                s.objective,
                s.lower_gap,
                s.outer_iterations,
                s.converged()
            )
        })
        .collect();
    write_csv(&out, "totals.csv", "seed,total_time,gap,iterations,converged", &rows)?;

    let lo = sols.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
    let hi = sols.iter().map(|s| s.objective).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let converged = sols.iter().filter(|s| s.converged()).count();
    if range > 0.0 {
        let mut counts = [0usize; 10];
        for s in &sols {
            let b = (((s.objective - lo) / range * 10.0) as usize).min(9);
            counts[b] += 1;
        }
        let hist: Vec<String> = counts
            .iter()
            .enumerate()
            .map(|(b, c)| {
                format!(
                    "{},{},{}",
                    lo + range * b as f64 / 10.0,
                    lo + range * (b + 1) as f64 / 10.0,
                    c
                )
            })
            .collect();
        write_csv(&out, "histogram.csv", "bin_lo,bin_hi,count", &hist)?;
    }
    write_json(
        &out,
        "report.json",
        &json!({
            "problem": prob.name,
            "starts": n,
            "converged": converged,
            "min_total_time": lo,
            "max_total_time": hi,
            "range": range,
        }),
    )?;
    println!("{}: {converged}/{n} converged, total-time range {range:e}", prob.name);
    if converged != n {
        bail!("{} starts missed the gap tolerance", n - converged);
    }
    if range <= 0.0 {
        bail!("all starts reached the same total time; no multiplicity to report");
    }
    Ok(())
}

/// Reverse-mode vs finite-difference agreement at each unroll depth, and
/// the stabilization of the gradient as the depth doubles.
fn gradient_depth(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/gradient-depth")?;
    let mut prob = problem_or(ov, "braess")?;
    if ov.problem.is_none() && ov.fixture.is_none() && ov.r.is_none() {
        // The canonical subject needs a hotter rate than its equilibrium
        // default for the depth ladder to contract visibly by T = 80.
        prob.opts.r = 0.05;
    }
    let p0 = prob.equal_init();
    let z = prob.z0.clone();
    let fd_step = 1e-6;
    let mut rows = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut max_err = 0.0f64;
    let mut deltas = Vec::new();
    for t in [5usize, 10, 20, 40, 80] {
        let mut rec = forward_record(&prob, &p0, &z, t);
        let grad = backward(&mut rec).l_z;
        let fd = fd_gradient(
            |z| forward_record(&prob, &p0, z, t).objective_value(),
            &z,
            fd_step,
        );
        let err = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        max_err = max_err.max(err);
        let delta = prev
            .as_ref()
            .map(|g| {
                g.iter()
                    .zip(&grad)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::NAN);
        if !delta.is_nan() {
            deltas.push(delta);
        }
        rows.push(format!("{t},{err:e},{delta:e}"));
        prev = Some(grad);
    }
    write_csv(&out, "depth.csv", "T,max_rel_err_vs_fd,step_from_half_depth", &rows)?;
    let contracting = deltas.windows(2).all(|w| w[1] < w[0]);
    write_json(
        &out,
        "report.json",
        &json!({
            "problem": prob.name,
            "r": prob.opts.r,
            "fd_step": fd_step,
            "max_rel_err": max_err,
            "deltas": deltas,
            "contracting": contracting,
        }),
    )?;
    if max_err > 1e-5 {
        bail!("reverse-mode and finite-difference gradients disagree: {max_err:e}");
    }
    if !contracting {
        bail!("gradient differences did not shrink as the depth doubled: {deltas:?}");
    }
    Ok(())
}

/// Measured forward/backward operation counts against the closed formulas,
/// and the backward/forward cost ratio against its 4/3 bound.
fn opcount(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/opcount")?;
    let cases: &[(&str, usize)] = &[("braess", 1), ("braess", 5), ("parallel:1000", 10)];
    let mut rows = Vec::new();
    let mut pass = true;
    let mut max_ratio = 0.0f64;
    for &(name, t) in cases {
        let prob = fixture(name)?;
        let (k, a, nnz) = (prob.ps.n_paths(), prob.net.links.len(), prob.ps.lambda.nnz());
        let p0 = prob.equal_init();
        let mut rec = forward_record(&prob, &p0, &prob.z0, t);
        backward(&mut rec);
        let rep = count_report(&rec, None);
        let fwd = (7 * t + 1) * k + (4 * t + 3) * a + (2 * t + 1) * nnz;
        let bwd = (10 * t + 1) * k + (2 * t + 3) * a + (2 * t + 1) * nnz;
        pass &= rep.fwd_ops == fwd && rep.bwd_ops == bwd && rep.ratio <= 4.0 / 3.0;
        max_ratio = max_ratio.max(rep.ratio);
        rows.push(format!(
            "{name},{t},{},{fwd},{},{bwd},{}",
            rep.fwd_ops, rep.bwd_ops, rep.ratio
        ));
    }
    write_csv(
        &out,
        "opcount.csv",
        "fixture,T,fwd_measured,fwd_expected,bwd_measured,bwd_expected,ratio",
        &rows,
    )?;
    write_json(
        &out,
        "report.json",
        &json!({ "pass": pass, "max_ratio": max_ratio, "ratio_bound": 4.0 / 3.0 }),
    )?;
    if !pass {
        bail!("operation counts missed the closed formulas or the 4/3 ratio bound");
    }
    Ok(())
}

/// Wall time of one forward-plus-backward pass as the network widens
/// (best of three, unroll depth from `--T`, default 10).
fn scaling(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/scaling")?;
    let t = ov.t.unwrap_or(10);
    let mut rows = Vec::new();
    let mut seconds = Vec::new();
    for links in [1_000usize, 10_000, 100_000] {
        let mut prob = fixture(&format!("parallel:{links}"))?;
        apply_tuning(&mut prob, ov);
        let p0 = prob.equal_init();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t0 = Instant::now();
            let mut rec = forward_record(&prob, &p0, &prob.z0, t);
            backward(&mut rec);
            best = best.min(t0.elapsed().as_secs_f64());
        }
        rows.push(format!("{links},{best}"));
        seconds.push(best);
    }
    write_csv(&out, "scaling.csv", "links,seconds_fp_bp", &rows)?;
    let ratio = seconds[2] / seconds[0];
    write_json(
        &out,
        "report.json",
        &json!({ "T": t, "ratio_100x": ratio, "ratio_bound": 300.0 }),
    )?;
    println!("FP+BP at T={t}: {:?} s, 100x-width ratio {ratio:.1}", seconds);
    if ratio > 300.0 {
        bail!("scaling ratio {ratio:.1} exceeds the 300x bound for a 100x wider network");
    }
    Ok(())
}

/// All leader solvers on one design instance: the no-intervention and
/// system-optimal anchors, double-loop, single-loop at increasing
/// anticipation, and optimization-assignment alternation.
fn design_bench(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/design-bench")?;
    let prob = problem_or(ov, "braess_design")?;
    let p0 = prob.equal_init();
    let (we_obj, we_st) = prob.no_intervention()?;
    let so = prob.solve_leader(Algorithm::So, &p0)?;
    let share = |obj: f64| remaining_gap(obj, we_obj, so.objective);
    let mut rows = vec![
        format!("we,,{we_obj},{},{},{}", share(we_obj), we_st.iterations, if we_st.converged { "converged" } else { "max_iterations" }),
        format!("so,,{},{},{},{}", so.objective, share(so.objective), so.outer_iterations, so.status),
    ];
    let mut all_ok = we_st.converged && so.converged();

    let dol = prob.solve_leader(Algorithm::Dol, &p0)?;
    rows.push(format!(
        "dol,,{},{},{},{}",
        dol.objective, share(dol.objective), dol.outer_iterations, dol.status
    ));
    all_ok &= dol.converged();

    let mut sil_objs = Vec::new();
    for t in [0usize, 1, 3, 6, 10] {
        let mut p = prob.clone();
        p.opts.t_lookahead = t;
        let sil = p.solve_leader(Algorithm::Sil, &p0)?;
        rows.push(format!(
            "sil,{t},{},{},{},{}",
            sil.objective, share(sil.objective), sil.outer_iterations, sil.status
        ));
        all_ok &= sil.converged();
        sil_objs.push(json!([t, sil.objective]));
    }

    let ioa = prob.solve_leader(Algorithm::Ioa, &p0)?;
    rows.push(format!(
        "ioa,,{},{},{},{}",
        ioa.objective, share(ioa.objective), ioa.outer_iterations, ioa.status
    ));
    all_ok &= ioa.converged();

    write_csv(
        &out,
        "bench.csv",
        "solver,anticipation,objective,remaining_share,iterations,status",
        &rows,
    )?;
    let ordering_ok = so.objective <= dol.objective && dol.objective <= we_obj;
    write_json(
        &out,
        "report.json",
        &json!({
            "problem": prob.name,
            "no_intervention": we_obj,
            "system_optimum": so.objective,
            "dol": dol.objective,
            "sil": sil_objs,
            "ioa": ioa.objective,
            "ordering_ok": ordering_ok,
            "all_converged": all_ok,
        }),
    )?;
    println!(
        "{}: WE {we_obj:.6}, SO {:.6}, Dol {:.6} (closes {:.1}% of the gap)",
        prob.name,
        so.objective,
        dol.objective,
        100.0 * (1.0 - share(dol.objective))
    );
    if !ordering_ok {
        bail!("objective ordering SO <= Dol <= WE violated");
    }
    if !all_ok {
        bail!("a solver stopped before its tolerance");
    }
    Ok(())
}

/// Tollable-link selection by relative equilibrium/cooperative flow
/// discrepancy, swept over thresholds and both denominator conventions.
fn tollable(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/tollable")?;
    let prob = problem_or(ov, "braess")?;
    let cfg = prob.ild_config();
    let mut rows = Vec::new();
    let mut nested_ok = true;
    for (tag, base) in [("ce", DiscrepancyBase::CeFlow), ("we", DiscrepancyBase::WeFlow)] {
        let mut prev: Option<Vec<bool>> = None;
        for xi in [0.05, 0.1, 0.2, 0.4] {
            let sel = select_tollable(&prob.net, &prob.ps, &prob.model, xi, base, &cfg)?;
            let mask: String = sel.iter().map(|b| if *b { '1' } else { '0' }).collect();
            let n = sel.iter().filter(|b| **b).count();
            rows.push(format!("{xi},{tag},{n},{mask}"));
            if let Some(prev) = &prev {
                // Raising the threshold can only deselect links.
                nested_ok &= sel.iter().zip(prev).all(|(now, was)| !now || *was);
            }
            prev = Some(sel);
        }
    }
    write_csv(&out, "tollable.csv", "xi,base,n_selected,mask", &rows)?;
    write_json(
        &out,
        "report.json",
        &json!({ "problem": prob.name, "nested_ok": nested_ok }),
    )?;
    if !nested_ok {
        bail!("selection was not nested in the threshold");
    }
    Ok(())
}

/// OD pairs ranked by the one-step improvement a controlled fleet on that
/// OD alone could make to total travel time.
fn od_ranking(ov: &Overrides) -> Result<()> {
    let out = ov.out_dir("reports/od-ranking")?;
    let prob = problem_or(ov, "two_od_routing")?;
    let alpha = 0.2;
    let scores = rank_od_potential(&prob.net, &prob.ps, prob.model.kind, alpha)?;
    let rows: Vec<String> = scores
        .iter()
        .enumerate()
        .map(|(rank, (w, s))| {
            let od = &prob.net.od[*w];
            format!("{},{w},{},{},{s}", rank + 1, od.o, od.d)
        })
        .collect();
    write_csv(&out, "od_ranking.csv", "rank,od,origin,destination,score", &rows)?;
    let descending = scores.windows(2).all(|w| w[0].1 >= w[1].1);
    write_json(
        &out,
        "report.json",
        &json!({ "problem": prob.name, "alpha": alpha, "descending_ok": descending }),
    )?;
    if !descending {
        bail!("ranking scores were not descending");
    }
    Ok(())
}
