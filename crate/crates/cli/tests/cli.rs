//! End-to-end tests of the `stackroute` binary: each spawns the compiled
//! executable, then checks exit status and the CSV/JSON files it writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackroute"))
        .args(args)
        .env("STACKROUTE_THREADS", "2")
        .output()
        .expect("binary runs")
}

/// Fresh per-test output directory under the cargo tmp dir.
fn outdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn solve_we_reaches_tolerance_and_reports_solution() {
    let dir = outdir("solve_we_two_link");
    let out = run(&["solve-we", "--fixture", "two_link", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let sol = json(&dir.join("solution.json"));
    assert_eq!(sol["status"], "converged");
    assert!((sol["p"][0][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-6);
    assert_eq!(sol["options"]["r"].as_f64().unwrap(), 0.5);

    let trace = fs::read_to_string(dir.join("we_trace.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    let gap: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(gap <= 1e-10, "final traced gap {gap}");
}

#[test]
fn solve_we_random_start_converges() {
    let dir = outdir("solve_we_random");
    let out = run(&[
        "solve-we", "--fixture", "braess", "--init", "random", "--seed", "7",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let sol = json(&dir.join("solution.json"));
    assert_eq!(sol["status"], "converged");
    // The Braess equilibrium totals 552 regardless of the start.
    assert!((sol["objective"].as_f64().unwrap() - 552.0).abs() < 1e-6);
}

#[test]
fn cooperative_assignment_reports_total_time() {
    let dir = outdir("solve_we_ce");
    let out = run(&["solve-we", "--fixture", "two_link", "--alg", "ce", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let sol = json(&dir.join("solution.json"));
    assert!((sol["objective"].as_f64().unwrap() - 8.875).abs() < 1e-6);
}

#[test]
fn unknown_fixture_fails_with_message() {
    let out = run(&["solve-we", "--fixture", "bogus"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("unknown fixture") && err.contains("two_link"), "{err}");
}

#[test]
fn gradient_check_matches_finite_differences() {
    let dir = outdir("gradient_check");
    let out = run(&["gradient-check", "--fixture", "braess", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rep = json(&dir.join("gradient_check.json"));
    assert_eq!(rep["T"].as_u64().unwrap(), 50);
    assert_eq!(rep["fd_step"].as_f64().unwrap(), 1e-6);
    assert!(rep["max_rel_err"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn single_loop_without_anticipation_rejected_on_pricing() {
    let dir = outdir("sil_zero");
    let out = run(&[
        "solve-scg", "--fixture", "two_link_pricing", "--alg", "sil", "--T", "0",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("T >= 1"), "{}", stderr_of(&out));
}

#[test]
fn double_loop_writes_monotone_objective_log() {
    let dir = outdir("dol_design");
    let out = run(&[
        "solve-scg", "--fixture", "braess_design", "--alg", "dol",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let log = fs::read_to_string(dir.join("scg_log.csv")).unwrap();
    let objs: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(objs.len() >= 2);
    assert!(
        objs.windows(2).all(|w| w[1] <= w[0] + 1e-9),
        "objective log not nonincreasing: {objs:?}"
    );
    let sol = json(&dir.join("solution.json"));
    assert_eq!(sol["status"], "converged");
}

#[test]
fn multistart_records_every_seed() {
    let dir = outdir("multistart");
    let out = run(&[
        "solve-scg", "--fixture", "two_link_pricing", "--alg", "dol",
        "--multistart", "5", "--seed", "3", "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = json(&dir.join("solutions.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 5);
    let seeds: Vec<u64> = records.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![3, 4, 5, 6, 7]);
    assert!(records.iter().all(|r| r["status"] == "converged"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = outdir("config_precedence");
    let cfg = dir.join("run.json");
    fs::write(&cfg, r#"{"fixture": "two_link", "r": 0.123}"#).unwrap();

    let from_file = dir.join("from_file");
    let out = run(&[
        "solve-we", "--config", cfg.to_str().unwrap(), "--out", from_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let sol = json(&from_file.join("solution.json"));
    assert_eq!(sol["options"]["r"].as_f64().unwrap(), 0.123);

    let from_flag = dir.join("from_flag");
    let out = run(&[
        "solve-we", "--config", cfg.to_str().unwrap(), "--r", "0.5",
        "--out", from_flag.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let sol = json(&from_flag.join("solution.json"));
    assert_eq!(sol["options"]["r"].as_f64().unwrap(), 0.5);
}

#[test]
fn reruns_write_identical_bytes() {
    let a = outdir("determinism_a");
    let b = outdir("determinism_b");
    for dir in [&a, &b] {
        let out = run(&[
            "solve-we", "--fixture", "two_link", "--init", "random", "--seed", "11",
            "--out", dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in ["solution.json", "we_trace.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn opcount_preset_verifies_the_formulas() {
    let dir = outdir("exp_opcount");
    let out = run(&["experiment", "opcount", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(json(&dir.join("report.json"))["pass"], true);
    let csv = fs::read_to_string(dir.join("opcount.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus three cases");
}

#[test]
fn od_ranking_preset_orders_by_potential() {
    let dir = outdir("exp_od_ranking");
    let out = run(&["experiment", "od-ranking", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = fs::read_to_string(dir.join("od_ranking.csv")).unwrap();
    let scores: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(scores.len() >= 2);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(scores[0] > 100.0 * scores[1], "ranking should separate the ODs");
}

#[test]
fn multi_equilibria_preset_finds_distinct_totals() {
    let dir = outdir("exp_multi_eq");
    let out = run(&[
        "experiment", "multi-equilibria", "--multistart", "8",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rep = json(&dir.join("report.json"));
    assert_eq!(rep["converged"].as_u64().unwrap(), 8);
    assert!(rep["range"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(dir.join("totals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9, "header plus eight starts");
}

#[test]
fn unknown_preset_fails_with_the_list() {
    let out = run(&["experiment", "frobnicate"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("convergence|"), "{}", stderr_of(&out));
}
