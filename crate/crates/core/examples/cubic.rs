use homp_core::diagnostics::{restricted_merit, ReferenceRegion};
use homp_core::homp::{homp_p2_run, SolverConfig};
use homp_core::problems::{make_problem, ProblemKind, ProblemSpec};
use homp_core::Vector;

fn main() -> homp_core::Result<()> {
    let problem = make_problem(&ProblemSpec::new(ProblemKind::CubicReg, 4, 7))?;
    let mut z1 = Vector::zeros(problem.dim());
    z1[0] = 1.0;

    let report = homp_p2_run(problem.field.as_ref(), &problem.smoothness, &z1, &SolverConfig::new(2, 128)?)?;
    let region = ReferenceRegion::around_start(&z1, problem.known_solution.as_ref());
    println!("Gamma_T = {:.3e}", report.gamma_total);
    println!("merit   = {:.3e}", restricted_merit(&report.records, &region)?);
    if let Some(z_star) = &problem.known_solution {
        println!("|z_bar - z*| = {:.3e}", (&report.z_bar - z_star).norm());
    }
    Ok(())
}
