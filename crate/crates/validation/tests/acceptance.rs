//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::time::Instant;

use homp_core::diagnostics::{duality_gap, jacobian_spectrum_check, trajectory_bound_monitor};
use homp_core::gamma_search::{binary_search_gamma, implicit_step_p2, StepContext};
use homp_core::geometry::{prox_step, BregmanGeometry, ConstraintSet};
use homp_core::homp::implicit_step_general;
use homp_core::mirror_prox::{mp_run, MpConfig};
use homp_core::problems::{make_problem, ProblemKind, ProblemSpec};
use homp_core::vectorfield::{factorial, taylor_eval, FnField, LinearField};
use homp_core::{Branch, Matrix, Vector};
use homp_lab::config::{HompSettings, MpSettings};
use homp_lab::{run_experiment, ExperimentConfig, MethodConfig, Mode, MonitorConfig, Outcome, RunOptions, StartPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn homp(order: usize, horizons: &[usize]) -> MethodConfig {
    let s = HompSettings {
        horizons: horizons.to_vec(),
        order: (order > 2).then_some(order),
        band_scale: None,
        gamma_plus_cap: None,
        newton_tol: None,
        newton_max_iter: None,
    };
    if order == 2 {
        MethodConfig::HompP2(s)
    } else {
        MethodConfig::HompGeneral(s)
    }
}

fn mp(horizons: &[usize]) -> MethodConfig {
    MethodConfig::Mp(MpSettings {
        horizons: horizons.to_vec(),
        gamma: None,
    })
}

fn experiment(problem: ProblemSpec, methods: Vec<MethodConfig>) -> ExperimentConfig {
    ExperimentConfig {
        problem,
        methods,
        z1: StartPolicy::Unit,
        output: None,
        monitors: MonitorConfig::all(),
    }
}

fn slope(outcome: &Outcome, method: &str) -> f64 {
    outcome.summary.slopes.iter().find(|s| s.method == method).map_or(f64::NAN, |s| s.slope)
}

fn cubic_runs() -> (Outcome, f64) {
    let clock = Instant::now();
    let grid = [16, 32, 64, 128, 256, 512];
    let config = experiment(
        ProblemSpec::new(ProblemKind::CubicReg, 4, 7).with_rho(1.0),
        vec![mp(&grid), homp(2, &grid)],
    );
    let outcome = run_experiment(&config, Mode::Compare, &RunOptions::default()).expect("cubic runs");
    (outcome, clock.elapsed().as_secs_f64())
}

fn quartic_runs() -> (Outcome, f64) {
    let clock = Instant::now();
    let grid = [8, 16, 32, 64, 128, 256];
    let config = experiment(
        ProblemSpec::new(ProblemKind::QuarticReg, 3, 11).with_rho(1.0),
        vec![homp(3, &grid), homp(2, &grid)],
    );
    let outcome = run_experiment(&config, Mode::Compare, &RunOptions::default()).expect("quartic runs");
    (outcome, clock.elapsed().as_secs_f64())
}

fn criterion_1(cubic: &Outcome, secs: f64) -> Verdict {
    let (h, m) = (slope(cubic, "homp_p2"), slope(cubic, "mp"));
    let pass = h <= -1.35 && (-1.25..=-0.80).contains(&m) && h <= m - 0.3 && secs <= 60.0;
    verdict(
        pass,
        format!("homp_p2 slope {h:.3} (need <= -1.35), mp slope {m:.3} (need in [-1.25, -0.80]), separation {:.3} (need >= 0.3), {secs:.1}s", m - h),
    )
}

fn criterion_2(quartic: &Outcome, secs: f64) -> Verdict {
    let (p3, p2) = (slope(quartic, "homp_p3"), slope(quartic, "homp_p2"));
    let pass = p3 <= -1.5 && p3 <= p2 - 0.2 && secs <= 120.0;
    verdict(
        pass,
        format!("homp_p3 slope {p3:.3} (need <= -1.5), homp_p2 slope {p2:.3}, gain {:.3} (need >= 0.2), {secs:.1}s", p2 - p3),
    )
}

fn criterion_3(runs: &[&Outcome]) -> Verdict {
    let (mut searched, mut capped, mut bad) = (0, 0, Vec::new());
    for outcome in runs {
        for (summary, report) in outcome.summary.runs.iter().zip(&outcome.reports) {
            if summary.order < 2 {
                continue;
            }
            if summary.monitors.get("band").map(String::as_str) != Some("pass") {
                bad.push(format!("{} T={}", summary.method, summary.horizon));
            }
            let cap = (summary.horizon as f64).powf(1.5);
            for r in &report.records {
                match r.branch {
                    Branch::Searched => searched += 1,
                    Branch::CapPlus | Branch::CapMinus => {
                        capped += 1;
                        if r.gamma > cap * (1.0 + 1e-12) {
                            bad.push(format!("{} T={} t={} cap exceeded", summary.method, summary.horizon, r.t));
                        }
                    }
                    Branch::Fixed => {}
                }
            }
        }
    }
    verdict(
        bad.is_empty() && searched > 0,
        format!("{searched} searched steps in band, {capped} cap steps within T^1.5, violations {bad:?}"),
    )
}

fn criterion_4(runs: &[&Outcome]) -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    for outcome in runs {
        for s in &outcome.summary.runs {
            checked += 1;
            if s.monitors.get("sum_bound").map(String::as_str) != Some("pass") {
                bad.push(format!("{} T={}", s.method, s.horizon));
            }
        }
        bad.extend(outcome.summary.violations.iter().filter(|v| v.contains("telescoping")).cloned());
    }
    verdict(bad.is_empty(), format!("{checked} runs x 10 reference points, failures {bad:?}"))
}

fn monotone_matrix(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..=1.0));
    let k = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..=1.0));
    g.transpose() * &g / n as f64 + (&k - k.transpose()) * 0.5
}

fn random_vector(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.gen_range(-1.0..=1.0) * scale)
}

fn in_band(ctx: &StepContext, g: f64) -> bool {
    let gs = g * ctx.resolvent_step(g).unwrap().displacement;
    (1.0 / 16.0..=1.0 / 8.0).contains(&gs)
}

fn criterion_5() -> Verdict {
    let cap = 64f64.powf(1.5);
    let rot = LinearField::homogeneous(Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
    let ctx = StepContext::new(&rot, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
    let (g_rot, _) = binary_search_gamma(&ctx, ctx.delta(1.0), cap, 64, 1.0).unwrap();
    let star_rot = ((1.0 + 577f64.sqrt()) / 288.0).sqrt();
    let rot_ok = in_band(&ctx, g_rot) && (g_rot - star_rot).abs() <= 1e-6;

    let id = LinearField::homogeneous(Matrix::identity(1, 1)).unwrap();
    let ctx = StepContext::new(&id, &Vector::from_element(1, 1.0)).unwrap();
    let (g_id, _) = binary_search_gamma(&ctx, ctx.delta(1.0), cap, 64, 1.0).unwrap();
    let id_ok = in_band(&ctx, g_id) && (g_id - 1.0 / 3.0).abs() <= 1e-6;

    let mut r = ChaCha8Rng::seed_from_u64(5);
    let (mut instances, mut violations) = (0, 0);
    while instances < 100 {
        let n = r.gen_range(2..6);
        let f = LinearField::new(monotone_matrix(&mut r, n), random_vector(&mut r, n, 1.0)).unwrap();
        let ctx = StepContext::new(&f, &random_vector(&mut r, n, 2.0)).unwrap();
        let delta = ctx.delta(1.0);
        // only instances where the search itself runs
        if delta >= cap || cap < 1.0 / (8.0 * ctx.resolvent_step(cap).unwrap().displacement) {
            continue;
        }
        let (g, _) = binary_search_gamma(&ctx, delta, cap, 64, 1.0).unwrap();
        if !in_band(&ctx, g) {
            violations += 1;
        }
        instances += 1;
    }
    verdict(
        rot_ok && id_ok && violations == 0,
        format!("rotation {g_rot:.8} vs {star_rot:.8}, scalar {g_id:.8} vs 1/3, {violations} band violations on {instances} random instances"),
    )
}

fn criterion_6() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let problems: Vec<_> = [
        ProblemSpec::new(ProblemKind::CubicReg, 3, 1),
        ProblemSpec::new(ProblemKind::QuarticReg, 2, 2),
        ProblemSpec::new(ProblemKind::MonotoneQuadratic, 4, 3),
        ProblemSpec::new(ProblemKind::Bilinear, 3, 4),
    ]
    .iter()
    .map(|s| make_problem(s).unwrap())
    .collect();
    let mut worst_p2 = 0.0f64;
    for k in 0..1000 {
        let p = &problems[k % problems.len()];
        let z = random_vector(&mut r, p.dim(), 2.0);
        let gamma = r.gen_range((1e-3f64).ln()..(1e3f64).ln()).exp();
        let zhat = implicit_step_p2(p.field.as_ref(), &z, gamma).unwrap();
        let f = p.field.eval(&z);
        let res = (&zhat - &z + (&f + p.field.jacobian(&z) * (&zhat - &z)) * gamma).norm();
        worst_p2 = worst_p2.max(res / (1e-10 * (1.0 + gamma * f.norm())));
    }
    let mut worst_general = 0.0f64;
    for k in 0..100 {
        let p = &problems[k % problems.len()];
        let z = random_vector(&mut r, p.dim(), 2.0);
        let gamma = r.gen_range((1e-2f64).ln()..(1e2f64).ln()).exp();
        let a = implicit_step_p2(p.field.as_ref(), &z, gamma).unwrap();
        let b = implicit_step_general(p.field.as_ref(), 2, &z, gamma, 1e-12, 50).unwrap();
        worst_general = worst_general.max((&a - &b.zhat).norm() / (1.0 + a.norm()));
    }
    let cube = FnField::new(1, |z| Vector::from_element(1, z[0].powi(3)))
        .with_jacobian(|z| Matrix::from_element(1, 1, 3.0 * z[0] * z[0]))
        .with_dir_derivative(3, |k, u, h| match k {
            2 => Some(Vector::from_element(1, 6.0 * u[0] * h[0] * h[0])),
            3 => Some(Vector::from_element(1, 6.0 * h[0].powi(3))),
            _ => None,
        });
    let sol = implicit_step_general(&cube, 3, &Vector::from_element(1, 1.0), 1.0, 1e-13, 50).unwrap();
    let cube_err = (sol.zhat[0] - 2.0 / 3.0).abs();
    verdict(
        worst_p2 <= 1.0 && worst_general <= 1e-8 && cube_err <= 1e-10,
        format!("worst p2 residual {worst_p2:.2e} x tolerance, worst general/p2 gap {worst_general:.2e}, cubic error {cube_err:.2e}"),
    )
}

fn criterion_7() -> Verdict {
    let clock = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    // power mean, as stated
    for _ in 0..1000 {
        let t = r.gen_range(1..=50usize);
        let xi: Vec<f64> = (0..t).map(|_| r.gen_range(1e-3..2.0)).collect();
        let radius = xi.iter().map(|x| x * x).sum::<f64>() * r.gen_range(1.0..3.0);
        for p in [2i32, 3, 4] {
            let lhs: f64 = xi.iter().map(|x| x.powi(-p)).sum();
            if lhs < (t as f64).powf(p as f64 / 2.0 + 1.0) / radius.powf(p as f64 / 2.0) - 1e-9 {
                failures.push("power mean");
            }
        }
    }
    // sum of squares
    for _ in 0..1000 {
        let a: Vec<f64> = (0..r.gen_range(1..40)).map(|_| r.gen_range(1e-6..1e3)).collect();
        let s: f64 = a.iter().sum();
        if s * s > a.len() as f64 * a.iter().map(|x| x * x).sum::<f64>() * (1.0 + 1e-12) {
            failures.push("sum of squares");
        }
    }
    // three-point prox on every supported pair
    let pairs = [
        (BregmanGeometry::SquaredEuclidean, ConstraintSet::whole_space(3)),
        (BregmanGeometry::SquaredEuclidean, ConstraintSet::bounded_box(Vector::from_element(3, -1.0), Vector::from_element(3, 1.0)).unwrap()),
        (BregmanGeometry::SquaredEuclidean, ConstraintSet::ball(Vector::zeros(3), 1.0).unwrap()),
        (BregmanGeometry::NegativeEntropy, ConstraintSet::simplex(3)),
    ];
    for (geo, set) in &pairs {
        for _ in 0..100 {
            let feasible = |r: &mut ChaCha8Rng| match set {
                ConstraintSet::Simplex { dim } => {
                    let w = Vector::from_fn(*dim, |_, _| r.gen_range(0.01..1.0));
                    let s = w.sum();
                    w / s
                }
                _ => random_vector(r, 3, 1.0 / 3f64.sqrt()),
            };
            let (z0, x) = (feasible(&mut r), feasible(&mut r));
            let g = random_vector(&mut r, 3, 2.0);
            let zp = prox_step(*geo, set, &z0, &g).unwrap();
            let lhs = g.dot(&x) + geo.divergence(&x, &z0).unwrap();
            let rhs = g.dot(&zp) + geo.divergence(&zp, &z0).unwrap() + geo.divergence(&x, &zp).unwrap();
            if lhs < rhs - 1e-9 {
                failures.push("three-point prox");
            }
        }
    }
    // Taylor remainder with declared constants
    for (spec, order) in [(ProblemSpec::new(ProblemKind::CubicReg, 3, 1), 2usize), (ProblemSpec::new(ProblemKind::QuarticReg, 3, 2), 3)] {
        let p = make_problem(&spec).unwrap();
        let l = p.smoothness.lipschitz(order).unwrap();
        for _ in 0..100 {
            let u = random_vector(&mut r, p.dim(), 2.0 / (p.dim() as f64).sqrt());
            let v = random_vector(&mut r, p.dim(), 2.0 / (p.dim() as f64).sqrt());
            let err = (p.field.eval(&v) - taylor_eval(p.field.as_ref(), &u, &v, order - 1).unwrap()).norm();
            if err > l / factorial(order) * (&v - &u).norm().powi(order as i32) + 1e-9 {
                failures.push("taylor remainder");
            }
        }
    }
    // symmetric part versus spectrum
    for _ in 0..100 {
        let n = r.gen_range(2..7);
        let s = jacobian_spectrum_check(&monotone_matrix(&mut r, n)).unwrap();
        if !(s.holds() && s.min_real_eigenvalue >= -1e-10) {
            failures.push("spectrum");
        }
    }
    // trajectory bounds on a second-order run
    for spec in [ProblemSpec::new(ProblemKind::CubicReg, 4, 7), ProblemSpec::new(ProblemKind::MonotoneQuadratic, 4, 3)] {
        let p = make_problem(&spec).unwrap();
        let mut z1 = Vector::zeros(p.dim());
        z1[0] = 1.0;
        let cfg = homp_core::homp::SolverConfig::new(2, 64).unwrap();
        let report = homp_core::homp::homp_p2_run(p.field.as_ref(), &p.smoothness, &z1, &cfg).unwrap();
        let check = trajectory_bound_monitor(&report.records, &z1, p.known_solution.as_ref().unwrap(), p.smoothness.lipschitz(1).unwrap());
        if !check.ok() {
            failures.push("trajectory bounds");
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    failures.dedup();
    verdict(failures.is_empty() && secs <= 30.0, format!("failures {failures:?}, {secs:.2}s"))
}

fn criterion_8() -> Verdict {
    let spec = ProblemSpec::new(ProblemKind::MatrixGame, 2, 0).with_matrix(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
    let game = make_problem(&spec).unwrap();
    let horizon = 1000;
    let z1 = Vector::from_element(4, 0.5);
    let config = MpConfig::default_for(&game.smoothness, horizon).unwrap();
    let report = mp_run(game.field.as_ref(), game.geometry, &game.set, &z1, &config).unwrap();
    let mm = game.minmax.as_ref().unwrap();
    let (x, y) = mm.split(&report.z_bar);
    let gap = duality_gap(mm, &x, &y).unwrap();
    let bound = 10.0 / horizon as f64;
    verdict(gap <= bound, format!("duality gap {gap:.3e} at T={horizon} with gamma={} (need <= {bound})", config.step_gamma))
}

fn criterion_9() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let grid = [8, 16, 32];
    let config = experiment(
        ProblemSpec::new(ProblemKind::QuarticReg, 3, 11),
        vec![mp(&grid), homp(2, &grid), homp(3, &grid)],
    );
    let mut files = Vec::new();
    for d in &dirs {
        let options = RunOptions {
            out_dir: Some(d.path().to_path_buf()),
            jobs: 0,
            seed: None,
        };
        let outcome = run_experiment(&config, Mode::Compare, &options).unwrap();
        files.push(outcome.written);
    }
    let mut identical = files[0].len() == files[1].len();
    for (a, b) in files[0].iter().zip(&files[1]) {
        identical &= std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    }
    verdict(identical, format!("{} files compared byte for byte", files[0].len()))
}

fn main() {
    let (cubic, cubic_secs) = cubic_runs();
    let (quartic, quartic_secs) = quartic_runs();
    let results = [
        ("rate separation", criterion_1(&cubic, cubic_secs)),
        ("third-order gain", criterion_2(&quartic, quartic_secs)),
        ("band invariant", criterion_3(&[&cubic, &quartic])),
        ("telescoping inequality", criterion_4(&[&cubic, &quartic])),
        ("binary search", criterion_5()),
        ("implicit-step exactness", criterion_6()),
        ("lemma suite", criterion_7()),
        ("baseline sanity", criterion_8()),
        ("determinism", criterion_9()),
    ];
    let mut passed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {} {name}: {} | {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        passed += v.pass as usize;
    }
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
