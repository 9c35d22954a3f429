use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use homp_core::diagnostics::{
    annotate, annotate_gap, fit_rate, jacobian_spectrum_check, reference_radius, sum_bound_monitor,
    trajectory_bound_monitor, ReferenceRegion,
};
use homp_core::geometry::{BregmanGeometry, ConstraintSet};
use homp_core::homp::{band_lipschitz, default_p2_band_scale, homp_general_run, homp_p2_run, SolverConfig};
use homp_core::mirror_prox::{mp_run, MpConfig};
use homp_core::problems::{make_problem, Problem, ProblemSpec};
use homp_core::vectorfield::{check_monotone, factorial};
use homp_core::{Branch, SolverReport, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MethodConfig, MonitorConfig, StartPolicy};
use crate::error::LabError;

/// Band edge as a function of the step length.
type Edge = Box<dyn Fn(f64) -> f64>;

pub const CSV_HEADER: &str = "t,gamma_t,step_norm,eg_norm,branch,inner_iters,implicit_residual,fnorm,merit";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One method at one horizon, written to `trajectory.csv`.
    Solve,
    /// Every method over its grid, one CSV per cell, with fitted slopes.
    Compare,
    /// Like `Compare` with every monitor and the problem property checks on.
    Check,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for CSV and summary files; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent grid cells (0 = rayon default).
    pub jobs: usize,
    /// Overrides the problem seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub method: String,
    pub order: usize,
    pub horizon: usize,
    /// Iterations recorded (equals `horizon`).
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(rename = "Gamma_T")]
    pub gamma_total: f64,
    pub merit: f64,
    pub fnorm_last: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    pub converged: bool,
    pub branches: BTreeMap<String, usize>,
    pub z_bar: Vec<f64>,
    pub monitors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SlopeEntry {
    pub method: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub problem: ProblemSpec,
    pub z1: Vec<f64>,
    pub reference_radius: f64,
    pub runs: Vec<RunSummary>,
    pub slopes: Vec<SlopeEntry>,
    pub violations: Vec<String>,
}

/// Result of [`run_experiment`]; monitor violations do not abort the run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    /// Reports in the same order as `summary.runs`.
    pub reports: Vec<SolverReport>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn status(&self) -> i32 {
        if self.summary.violations.is_empty() {
            0
        } else {
            4
        }
    }

    pub fn into_result(self) -> Result<Self, LabError> {
        if self.summary.violations.is_empty() {
            Ok(self)
        } else {
            Err(LabError::Monitor(self.summary.violations.clone()))
        }
    }
}

struct Cell<'a> {
    method: &'a MethodConfig,
    horizon: usize,
}

struct CellResult {
    summary: RunSummary,
    report: SolverReport,
    csv: String,
    violations: Vec<String>,
}

pub fn resolve_start(policy: &StartPolicy, problem: &Problem) -> Result<Vector, LabError> {
    let n = problem.dim();
    let z1 = match policy {
        StartPolicy::Origin => Vector::zeros(n),
        StartPolicy::Unit => {
            let mut e = Vector::zeros(n);
            e[0] = 1.0;
            e
        }
        StartPolicy::Explicit { values } => {
            if values.len() != n {
                return Err(LabError::Config(format!("z1.values: length {}, expected {n}", values.len())));
            }
            Vector::from_row_slice(values)
        }
        StartPolicy::Random { seed, radius } => {
            if !(*radius > 0.0) {
                return Err(LabError::Config("z1.radius: must be positive".into()));
            }
            sample_set(&mut ChaCha8Rng::seed_from_u64(*seed), &problem.set, *radius)
        }
    };
    if !z1.iter().all(|v| v.is_finite()) {
        return Err(LabError::Config("z1: non-finite entries".into()));
    }
    if !problem.set.contains(&z1, 1e-9) {
        return Err(LabError::Config("z1: starting point is outside the feasible set".into()));
    }
    Ok(z1)
}

fn sample_ball(rng: &mut ChaCha8Rng, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    let dir = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
    let norm = dir.norm();
    let r = radius * rng.gen_range(0.0..=1.0f64).powf(1.0 / n as f64);
    if norm == 0.0 {
        center.clone()
    } else {
        center + dir * (r / norm)
    }
}

fn sample_set(rng: &mut ChaCha8Rng, set: &ConstraintSet, radius: f64) -> Vector {
    match set {
        ConstraintSet::WholeSpace { dim } => sample_ball(rng, &Vector::zeros(*dim), radius),
        ConstraintSet::Box { lower, upper } => Vector::from_fn(lower.len(), |i, _| rng.gen_range(lower[i]..=upper[i])),
        ConstraintSet::Ball { center, radius } => sample_ball(rng, center, *radius),
        ConstraintSet::Simplex { dim } => {
            let w = Vector::from_fn(*dim, |_, _| -rng.gen_range(f64::MIN_POSITIVE..1.0).ln());
            let s = w.sum();
            w / s
        }
        ConstraintSet::Product(parts) => {
            let mut out = Vec::new();
            for p in parts {
                out.extend(sample_set(rng, p, radius).iter().copied());
            }
            Vector::from_vec(out)
        }
    }
}

fn run_id(cell: &Cell) -> String {
    format!("{} T={}", cell.method.label(), cell.horizon)
}

fn solve_cell(problem: &Problem, z1: &Vector, cell: &Cell) -> Result<SolverReport, LabError> {
    let field = problem.field.as_ref();
    let unconstrained = problem.set.is_whole_space()
        && problem.geometry == BregmanGeometry::SquaredEuclidean;
    let solver_err = |source| LabError::Solver { run: run_id(cell), source };
    match cell.method {
        MethodConfig::Mp(s) => {
            let config = match s.gamma {
                Some(g) => MpConfig::new(g, cell.horizon),
                None => MpConfig::default_for(&problem.smoothness, cell.horizon),
            }
            .map_err(|e| LabError::Config(format!("{}: {e}", run_id(cell))))?;
            mp_run(field, problem.geometry, &problem.set, z1, &config).map_err(solver_err)
        }
        MethodConfig::HompP2(s) | MethodConfig::HompGeneral(s) => {
            if !unconstrained {
                return Err(LabError::Config(format!(
                    "{}: higher-order methods need an unconstrained euclidean problem",
                    run_id(cell)
                )));
            }
            let config = homp_config(cell.method.order(), cell.horizon, s)
                .map_err(|e| LabError::Config(format!("{}: {e}", run_id(cell))))?;
            match cell.method {
                MethodConfig::HompP2(_) => homp_p2_run(field, &problem.smoothness, z1, &config),
                _ => homp_general_run(field, config.order, &problem.smoothness, z1, &config),
            }
            .map_err(|e| match e {
                e @ (homp_core::Error::Config(_) | homp_core::Error::UnsupportedOrder { .. }) => {
                    LabError::Config(format!("{}: {e}", run_id(cell)))
                }
                other => solver_err(other),
            })
        }
    }
}

fn homp_config(order: usize, horizon: usize, s: &crate::config::HompSettings) -> homp_core::Result<SolverConfig> {
    let mut c = SolverConfig::new(order, horizon)?;
    c.band_scale = s.band_scale;
    c.gamma_plus_cap = s.gamma_plus_cap;
    if let Some(t) = s.newton_tol {
        c.newton_tol = t;
    }
    if let Some(m) = s.newton_max_iter {
        c.newton_max_iter = m;
    }
    c.validate()?;
    Ok(c)
}

/// Checks the accepted-step invariants of a higher-order run.
fn band_violations(problem: &Problem, cell: &Cell, report: &SolverReport) -> Vec<String> {
    let (MethodConfig::HompP2(s) | MethodConfig::HompGeneral(s)) = cell.method else {
        return Vec::new();
    };
    let order = cell.method.order();
    let Ok(config) = homp_config(order, cell.horizon, s) else {
        return Vec::new();
    };
    let cap = config.cap();
    let id = run_id(cell);
    // band edges as functions of s = ‖ẑ − z‖
    let (lo, hi): (Edge, Edge) = if order == 2 && matches!(cell.method, MethodConfig::HompP2(_)) {
        let bs = config.band_scale.unwrap_or_else(|| default_p2_band_scale(&problem.smoothness));
        (Box::new(move |s| 1.0 / (16.0 * bs * s)), Box::new(move |s| 1.0 / (8.0 * bs * s)))
    } else {
        let Ok(lp) = band_lipschitz(&problem.smoothness, order) else {
            return vec![format!("{id}: no declared L_{order}")];
        };
        let pf = factorial(order);
        let k = order as i32 - 1;
        (
            Box::new(move |s| pf / (32.0 * lp * s.powi(k))),
            Box::new(move |s| pf / (16.0 * lp * s.powi(k))),
        )
    };
    let mut out = Vec::new();
    for r in &report.records {
        if r.gamma > cap * (1.0 + 1e-12) {
            out.push(format!("{id}: t={} gamma {} exceeds cap {cap}", r.t, r.gamma));
        }
        if r.implicit_residual > config.newton_tol * (1.0 + r.field_at_z.norm()) {
            out.push(format!("{id}: t={} implicit residual {}", r.t, r.implicit_residual));
        }
        if r.branch == Branch::Searched {
            let (l, h) = (lo(r.step_norm), hi(r.step_norm));
            if !(r.gamma >= l * (1.0 - 1e-9) && r.gamma <= h * (1.0 + 1e-9)) {
                out.push(format!("{id}: t={} gamma {} outside band [{l}, {h}]", r.t, r.gamma));
            }
        }
    }
    out
}

fn run_cell(
    problem: &Problem,
    z1: &Vector,
    region: &ReferenceRegion,
    monitors: &MonitorConfig,
    cell: &Cell,
) -> Result<CellResult, LabError> {
    let mut report = solve_cell(problem, z1, cell)?;
    let id = run_id(cell);
    annotate(&mut report, region).map_err(|e| LabError::Solver { run: id.clone(), source: e })?;
    let mut gap = None;
    if let Some(mm) = &problem.minmax {
        if annotate_gap(&mut report, mm).is_ok() {
            gap = report.series("gap").and_then(|s| s.last()).map(|p| p.1);
        }
    }

    let mut status = BTreeMap::new();
    let mut violations = Vec::new();
    let euclidean = problem.geometry == BregmanGeometry::SquaredEuclidean;
    let is_homp = !matches!(cell.method, MethodConfig::Mp(_));

    if monitors.band && is_homp {
        let v = band_violations(problem, cell, &report);
        status.insert("band".into(), if v.is_empty() { "pass" } else { "fail" }.into());
        violations.extend(v);
    }
    if monitors.sum_bound {
        if euclidean {
            let center = problem.known_solution.clone().unwrap_or_else(|| z1.clone());
            let radius = reference_radius(z1, problem.known_solution.as_ref());
            let mut rng = ChaCha8Rng::seed_from_u64(problem.spec.seed ^ ((cell.horizon as u64) << 16) ^ cell.method.order() as u64);
            let mut failed = 0;
            for k in 0..monitors.reference_points {
                let z = sample_ball(&mut rng, &center, radius);
                let check = sum_bound_monitor(&report.records, problem.geometry, z1, &z)
                    .map_err(|e| LabError::Solver { run: id.clone(), source: e })?;
                if !check.satisfied {
                    failed += 1;
                    violations.push(format!("{id}: telescoping bound fails at reference point {k}: {} > {}", check.lhs, check.rhs));
                }
            }
            status.insert("sum_bound".into(), if failed == 0 { "pass" } else { "fail" }.into());
        } else {
            status.insert("sum_bound".into(), "skipped: non-euclidean geometry".into());
        }
    }
    if monitors.trajectory_bound && is_homp {
        match (&problem.known_solution, problem.smoothness.lipschitz(1)) {
            (Some(z_star), Some(l1)) if euclidean => {
                let check = trajectory_bound_monitor(&report.records, z1, z_star, l1);
                status.insert("trajectory_bound".into(), if check.ok() { "pass" } else { "fail" }.into());
                if !check.field_violations.is_empty() {
                    violations.push(format!("{id}: field bound fails at t={:?}", check.field_violations));
                }
                if !check.step_violations.is_empty() {
                    violations.push(format!("{id}: step-sum bound fails at t={:?}", check.step_violations));
                }
            }
            _ => {
                status.insert("trajectory_bound".into(), "skipped: needs known solution and L1".into());
            }
        }
    }

    let csv = render_csv(&report);
    let merit = parse_back(report.series("merit").and_then(|s| s.last()).map_or(f64::NAN, |p| p.1));
    let mut branches = BTreeMap::new();
    for r in &report.records {
        *branches.entry(r.branch.as_str().to_string()).or_insert(0) += 1;
    }
    let summary = RunSummary {
        method: cell.method.label(),
        order: cell.method.order(),
        horizon: cell.horizon,
        iterations: report.records.len(),
        csv: None,
        gamma_total: report.gamma_total,
        merit,
        fnorm_last: report.records.last().map_or(0.0, |r| r.field_at_z.norm()),
        duality_gap: gap,
        converged: report.converged,
        branches,
        z_bar: report.z_bar.iter().copied().collect(),
        monitors: status,
    };
    Ok(CellResult {
        summary,
        report,
        csv,
        violations,
    })
}

fn parse_back(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

pub fn render_csv(report: &SolverReport) -> String {
    let merit = report.series("merit").unwrap_or(&[]);
    let fnorm = report.series("fnorm").unwrap_or(&[]);
    let mut out = String::with_capacity(64 * (report.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, r) in report.records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            fmt_float(r.gamma),
            fmt_float(r.step_norm),
            fmt_float(r.eg_norm),
            r.branch.as_str(),
            r.inner_iters,
            fmt_float(r.implicit_residual),
            fmt_float(fnorm.get(i).map_or(f64::NAN, |p| p.1)),
            fmt_float(merit.get(i).map_or(f64::NAN, |p| p.1)),
        );
    }
    out
}

/// Sampled sanity checks of the problem itself: monotonicity, the declared
/// first-order constant, the declared solution and the Jacobian spectrum.
pub fn problem_checks(problem: &Problem) -> Vec<String> {
    let mut out = Vec::new();
    let n = problem.dim();
    let radius = problem.spec.domain_radius;
    let origin = Vector::zeros(n);
    let mut rng = ChaCha8Rng::seed_from_u64(problem.spec.seed.wrapping_add(0x5eed));
    let report = check_monotone(
        problem.field.as_ref(),
        || {
            let u = sample_ball(&mut rng, &origin, radius);
            let v = sample_ball(&mut rng, &origin, radius);
            (u, v)
        },
        1000,
        1e-10,
    );
    if !report.monotone {
        out.push(format!("problem: monotonicity fails, min inner product {}", report.min_inner));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(problem.spec.seed.wrapping_add(0x11));
    if let Some(l1) = problem.smoothness.lipschitz(1) {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let u = sample_ball(&mut rng, &origin, radius);
            let v = sample_ball(&mut rng, &origin, radius);
            let d = (&u - &v).norm();
            if d > 0.0 {
                worst = worst.max((problem.field.eval(&u) - problem.field.eval(&v)).norm() / d);
            }
        }
        if worst > l1 * (1.0 + 1e-12) {
            out.push(format!("problem: sampled Lipschitz ratio {worst} exceeds declared L1 {l1}"));
        }
    }
    if let Some(z) = &problem.known_solution {
        if problem.set.is_whole_space() {
            let r = problem.field.eval(z).norm();
            if r > 1e-10 {
                out.push(format!("problem: declared solution has residual {r}"));
            }
        }
    }
    for _ in 0..20 {
        let z = sample_ball(&mut rng, &origin, radius);
        match jacobian_spectrum_check(&problem.field.jacobian(&z)) {
            Ok(s) if s.min_symmetric_eigenvalue >= -1e-10 && s.holds() => {}
            Ok(s) => {
                out.push(format!("problem: Jacobian symmetric part has eigenvalue {}", s.min_symmetric_eigenvalue));
                break;
            }
            Err(e) => {
                out.push(format!("problem: spectrum check failed: {e}"));
                break;
            }
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), LabError> {
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

/// Runs every `(method, T)` cell of `config`, evaluates the monitors and
/// writes CSV and summary files when an output directory is given.
pub fn run_experiment(config: &ExperimentConfig, mode: Mode, options: &RunOptions) -> Result<Outcome, LabError> {
    config.validate()?;
    let mut spec = config.problem.clone();
    if let Some(seed) = options.seed {
        spec.seed = seed;
    }
    let problem = make_problem(&spec).map_err(|e| LabError::Config(format!("problem: {e}")))?;
    let z1 = resolve_start(&config.z1, &problem)?;
    let region = if problem.set.is_whole_space() {
        ReferenceRegion::around_start(&z1, problem.known_solution.as_ref())
    } else {
        ReferenceRegion::Set(problem.set.clone())
    };
    let ref_radius = reference_radius(&z1, problem.known_solution.as_ref());

    let cells: Vec<Cell> = config
        .methods
        .iter()
        .flat_map(|m| m.horizons().iter().map(move |&horizon| Cell { method: m, horizon }))
        .collect();
    if mode == Mode::Solve && cells.len() != 1 {
        return Err(LabError::Config(format!(
            "solve runs one method at one horizon, the config has {} runs",
            cells.len()
        )));
    }
    let monitors = if mode == Mode::Check { MonitorConfig::all() } else { config.monitors.clone() };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| LabError::Config(format!("jobs: {e}")))?;
    let results: Vec<Result<CellResult, LabError>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(&problem, &z1, &region, &monitors, c)).collect());

    let mut runs = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    let mut csvs = Vec::with_capacity(results.len());
    let mut violations = Vec::new();
    if mode == Mode::Check {
        violations.extend(problem_checks(&problem));
    }
    for result in results {
        let mut cell = result?;
        let name = if mode == Mode::Solve {
            "trajectory.csv".to_string()
        } else {
            format!("{}_T{}.csv", cell.summary.method, cell.summary.horizon)
        };
        if options.out_dir.is_some() {
            cell.summary.csv = Some(name.clone());
        }
        violations.extend(cell.violations);
        csvs.push((name, cell.csv));
        runs.push(cell.summary);
        reports.push(cell.report);
    }

    let slopes = fit_slopes(&runs)?;
    let summary = Summary {
        problem: spec,
        z1: z1.iter().copied().collect(),
        reference_radius: ref_radius,
        runs,
        slopes,
        violations,
    };

    let mut written = Vec::new();
    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        for (name, csv) in &csvs {
            let path = dir.join(name);
            write_file(&path, csv)?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&path, &(json + "\n"))?;
        written.push(path);
    }
    Ok(Outcome {
        summary,
        reports,
        written,
    })
}

/// One slope per method with at least three horizons, fitted on the final merit.
fn fit_slopes(runs: &[RunSummary]) -> Result<Vec<SlopeEntry>, LabError> {
    let mut order: Vec<&str> = Vec::new();
    let mut grids: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in runs {
        if !grids.contains_key(r.method.as_str()) {
            order.push(&r.method);
        }
        grids.entry(&r.method).or_default().push((r.horizon as f64, r.merit));
    }
    let mut out = Vec::new();
    for method in order {
        let grid = &grids[method];
        if grid.len() < 3 {
            continue;
        }
        let fit = fit_rate(grid).map_err(|e| LabError::Solver {
            run: format!("{method} rate fit"),
            source: e,
        })?;
        out.push(SlopeEntry {
            method: method.to_string(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            grid: fit.grid,
        });
    }
    Ok(out)
}

/// Fits slopes from trajectory CSVs named `<method>_T<horizon>.csv`; each
/// file contributes `(rows, final merit)`.
pub fn rate_from_csvs(paths: &[PathBuf]) -> Result<Vec<SlopeEntry>, LabError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| LabError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    let mut grids: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for f in &files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let method = stem.rsplit_once("_T").map_or(stem, |(m, _)| m).to_string();
        let text = std::fs::read_to_string(f).map_err(|e| LabError::io(f, e))?;
        let (rows, merit) = parse_trajectory(&text).map_err(|msg| LabError::Config(format!("{}: {msg}", f.display())))?;
        grids.entry(method).or_default().push((rows as f64, merit));
    }
    let mut out = Vec::new();
    for (method, mut grid) in grids {
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fit = fit_rate(&grid).map_err(|e| LabError::Config(format!("{method}: {e}")))?;
        out.push(SlopeEntry {
            method,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            grid: fit.grid,
        });
    }
    Ok(out)
}

/// Row count and final merit of a trajectory CSV.
pub fn parse_trajectory(text: &str) -> Result<(usize, f64), String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected CSV header".into());
    }
    let mut rows = 0;
    let mut last = None;
    for line in lines.filter(|l| !l.is_empty()) {
        rows += 1;
        let merit = line.rsplit(',').next().ok_or("empty row")?;
        last = Some(merit.parse::<f64>().map_err(|e| format!("row {rows}: {e}"))?);
    }
    Ok((rows, last.ok_or("no rows")?))
}
