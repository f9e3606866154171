use stackroute::problems::{Algorithm, ProblemSpec};

fn main() -> stackroute::Result<()> {
    for (da, db) in [(10.0, 2.0), (14.0, 3.0), (20.0, 4.0)] {
        let trips = format!(
            "<END OF METADATA>\nOrigin 1\n  4 : {da};\nOrigin 2\n  4 : {db};\n"
        );
        std::fs::write("/tmp/verify/data/mini_trips.tntp", trips).unwrap();
        let prob = ProblemSpec::from_json(
            r#"{"family":"pricing","params":{"kind":"bpr","gamma":1.0,"r":0.2,"eps":1e-9},
                "network_ref":"/tmp/verify/data/mini_net.tntp","path_k":4}"#,
        )?
        .build()?;
        let we = prob.solve_equilibrium(&prob.z0, &prob.equal_init());
        let dol = prob.solve_leader(Algorithm::Dol, &prob.equal_init())?;
        let so = prob.solve_leader(Algorithm::So, &prob.equal_init())?;
        println!(
            "demand ({da},{db}): WE p={:?}",
            we.p[0].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        println!(
            "  we J={:.6}  dol J={:.6} ({} outer, {})  so J={:.6}",
            prob.evaluate_at(&we.p, &prob.z0),
            dol.objective, dol.outer_iterations, dol.status, so.objective
        );
    }
    Ok(())
}
