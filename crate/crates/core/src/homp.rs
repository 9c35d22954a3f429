//! Higher-order Mirror Prox for unconstrained monotone problems.
//!
//! Each iteration picks a step `γ_t` jointly with an implicit point `ẑ_t`
//! solving `ẑ_t − z_t + γ_t·T_{p−1}(ẑ_t; z_t) = 0`, such that
//! `p!/(32 L_p s^{p−1}) ≤ γ_t ≤ p!/(16 L_p s^{p−1})` with `s = ‖ẑ_t − z_t‖`,
//! then takes the extragradient step `z_{t+1} = z_t − γ_t F(ẑ_t)`.
//!
//! [`homp_p2_run`] is the explicit second-order variant: `ẑ_t` is one
//! linear solve and `γ_t` comes from [`binary_search_gamma`].
//! [`homp_general_run`] handles any order through a Newton solve of the
//! Taylor-model fixed point.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::gamma_search::{binary_search_gamma, GammaSearchState, StepContext};
use crate::linalg::{self, Matrix, Vector};
use crate::report::{Branch, IterateRecord, SolverReport};
use crate::vectorfield::{check_dim, factorial, SmoothnessSpec, VectorField};

/// Declared `L_p` below this is raised to it for band arithmetic.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Relative threshold on `‖F(z_t)‖` below which a run stops.
pub const CONVERGENCE_TOL: f64 = 1e-14;

/// Maximum number of step halvings when the implicit-step oracle fails.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Method order `p ≥ 2`.
    pub order: usize,
    pub iterations: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Overrides the default band scale (`max{L₂, floor}` for the explicit
    /// second-order method, `1` for the general method).
    pub band_scale: Option<f64>,
    /// Overrides the default cap `γ₊ = T^{3/2}`.
    pub gamma_plus_cap: Option<f64>,
}

impl SolverConfig {
    pub fn new(order: usize, iterations: usize) -> Result<Self> {
        let cfg = Self {
            order,
            iterations,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            band_scale: None,
            gamma_plus_cap: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Config(format!("method order must be >= 2, got {}", self.order)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config("newton_tol must be positive".into()));
        }
        if let Some(b) = self.band_scale {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Config(format!("band_scale must be positive, got {b}")));
            }
        }
        if let Some(c) = self.gamma_plus_cap {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("gamma_plus_cap must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn cap(&self) -> f64 {
        self.gamma_plus_cap
            .unwrap_or_else(|| (self.iterations as f64).powf(1.5))
    }
}

/// Floored `L_p` used by the band arithmetic.
pub fn band_lipschitz(smoothness: &SmoothnessSpec, order: usize) -> Result<f64> {
    smoothness
        .lipschitz(order)
        .map(|l| l.max(LIPSCHITZ_FLOOR))
        .ok_or_else(|| Error::Config(format!("L_{order} is required by the order-{order} method")))
}

/// Default band scale of [`homp_p2_run`]: `max{L₂, floor}`.
pub fn default_p2_band_scale(smoothness: &SmoothnessSpec) -> f64 {
    smoothness.lipschitz(2).unwrap_or(0.0).max(LIPSCHITZ_FLOOR)
}

/// Result of [`implicit_step_general`].
#[derive(Debug, Clone)]
pub struct ImplicitSolution {
    pub zhat: Vector,
    pub residual: f64,
    pub iters: usize,
}

/// Caches `F(z_t)` and `∇F(z_t)` for repeated Taylor-model solves.
struct TaylorModel<'a, F: ?Sized> {
    field: &'a F,
    order: usize,
    ctx: &'a StepContext,
}

impl<'a, F: VectorField + ?Sized> TaylorModel<'a, F> {
    /// `T_{p−1}(z + h; z)`.
    fn value(&self, h: &Vector) -> Result<Vector> {
        let mut acc = &self.ctx.f + &self.ctx.jacobian * h;
        for i in 2..self.order {
            acc += self.field.dir_derivative(i, &self.ctx.z, h)? / factorial(i);
        }
        Ok(acc)
    }

    /// Jacobian of `h ↦ T_{p−1}(z + h; z)`.
    fn jacobian(&self, h: &Vector) -> Result<Matrix> {
        let mut acc = self.ctx.jacobian.clone();
        for i in 2..self.order {
            acc += self.field.dir_derivative_jacobian(i, &self.ctx.z, h)? / factorial(i);
        }
        Ok(acc)
    }

    fn residual(&self, gamma: f64, h: &Vector) -> Result<Vector> {
        Ok(h + self.value(h)? * gamma)
    }

    /// Damped Newton on `r(h) = h + γ·T_{p−1}(z + h; z)`, started from the
    /// resolvent step.
    fn solve(&self, gamma: f64, tol: f64, max_iter: usize) -> Result<ImplicitSolution> {
        let z = &self.ctx.z;
        if gamma == 0.0 {
            return Ok(ImplicitSolution {
                zhat: z.clone(),
                residual: 0.0,
                iters: 0,
            });
        }
        let threshold = tol * (1.0 + gamma * self.ctx.f_norm);
        let mut h = self.ctx.resolvent_step(gamma)?.zhat - z;
        let mut r = self.residual(gamma, &h)?;
        let mut rnorm = r.norm();
        let n = z.len();
        let mut iters = 0;
        while !(rnorm <= threshold) {
            if iters >= max_iter || !rnorm.is_finite() {
                return Err(Error::OracleFailure { iters, residual: rnorm });
            }
            iters += 1;
            let jr = Matrix::identity(n, n) + self.jacobian(&h)? * gamma;
            let dir = match linalg::solve(&jr, &r) {
                Ok(d) => -d,
                Err(_) => return Err(Error::OracleFailure { iters, residual: rnorm }),
            };
            let mut alpha = 1.0;
            loop {
                let trial = &h + &dir * alpha;
                let tr = self.residual(gamma, &trial)?;
                let tnorm = tr.norm();
                if tnorm <= (1.0 - 1e-4 * alpha) * rnorm || alpha < 1e-10 {
                    h = trial;
                    r = tr;
                    rnorm = tnorm;
                    break;
                }
                alpha *= 0.5;
            }
        }
        Ok(ImplicitSolution {
            zhat: z + h,
            residual: rnorm,
            iters,
        })
    }
}

fn check_order<F: VectorField + ?Sized>(field: &F, order: usize) -> Result<()> {
    if order < 2 {
        return Err(Error::Config(format!("method order must be >= 2, got {order}")));
    }
    if order - 1 > field.max_order() {
        return Err(Error::UnsupportedOrder {
            requested: order - 1,
            max: field.max_order(),
        });
    }
    Ok(())
}

/// Solves `ẑ − z + γ·T_{p−1}(ẑ; z) = 0` to `‖r‖ ≤ tol·(1 + γ‖F(z)‖)`.
pub fn implicit_step_general<F: VectorField + ?Sized>(
    field: &F,
    order: usize,
    z: &Vector,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ImplicitSolution> {
    check_order(field, order)?;
    if !(gamma >= 0.0) {
        return Err(Error::Usage(format!("step size must be nonnegative, got {gamma}")));
    }
    let ctx = StepContext::new(field, z)?;
    TaylorModel { field, order, ctx: &ctx }.solve(gamma, tol, max_iter)
}

fn converged(f_norm: f64, f1_norm: f64) -> bool {
    f_norm <= CONVERGENCE_TOL * (1.0 + f1_norm)
}

/// What the cap branch produces once `F(z_t)` vanishes:
/// `ẑ_t = z_{t+1} = z_t` with the cap as weight.
fn terminal_record(t: usize, ctx: &StepContext, gamma: f64) -> IterateRecord {
    IterateRecord {
        t,
        z: ctx.z.clone(),
        zhat: ctx.z.clone(),
        z_next: ctx.z.clone(),
        gamma,
        step_norm: 0.0,
        eg_norm: 0.0,
        branch: Branch::CapPlus,
        inner_iters: 0,
        implicit_residual: 0.0,
        field_at_z: ctx.f.clone(),
        field_at_zhat: ctx.f.clone(),
    }
}

struct Step {
    gamma: f64,
    zhat: Vector,
    residual: f64,
    branch: Branch,
    inner_iters: usize,
}

fn finish_step<F: VectorField + ?Sized>(field: &F, t: usize, ctx: StepContext, step: Step) -> Result<IterateRecord> {
    let fzhat = field.eval(&step.zhat);
    if !fzhat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: t,
            what: "F(zhat_t)".into(),
        });
    }
    let z_next = &ctx.z - &fzhat * step.gamma;
    if !z_next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: t,
            what: "z_{t+1}".into(),
        });
    }
    Ok(IterateRecord {
        t,
        step_norm: (&step.zhat - &ctx.z).norm(),
        eg_norm: (&z_next - &step.zhat).norm(),
        z: ctx.z,
        zhat: step.zhat,
        z_next,
        gamma: step.gamma,
        branch: step.branch,
        inner_iters: step.inner_iters,
        implicit_residual: step.residual,
        field_at_z: ctx.f,
        field_at_zhat: fzhat,
    })
}

fn at_iteration(err: Error, t: usize) -> Error {
    match err {
        Error::NonFinite { what, .. } => Error::NonFinite { iteration: t, what },
        other => other,
    }
}

/// Drives the outer loop shared by both solvers; `choose` picks `(γ_t, ẑ_t)`.
fn outer_loop<F, C>(field: &F, z1: &Vector, config: &SolverConfig, mut choose: C) -> Result<SolverReport>
where
    F: VectorField + ?Sized,
    C: FnMut(usize, &StepContext) -> Result<Step>,
{
    config.validate()?;
    check_dim(field.dim(), z1)?;
    let cap = config.cap();
    let mut z = z1.clone();
    let mut f1_norm = None;
    let mut records = Vec::with_capacity(config.iterations);
    let mut done = false;
    for t in 1..=config.iterations {
        let ctx = StepContext::new(field, &z).map_err(|e| at_iteration(e, t))?;
        let f1 = *f1_norm.get_or_insert(ctx.f_norm);
        if converged(ctx.f_norm, f1) {
            // the remaining iterations are cap-branch no-ops
            records.extend((t..=config.iterations).map(|s| terminal_record(s, &ctx, cap)));
            done = true;
            break;
        }
        let step = choose(t, &ctx)?;
        let record = finish_step(field, t, ctx, step)?;
        z = record.z_next.clone();
        records.push(record);
    }
    SolverReport::from_records(z1.clone(), config.iterations, records, done)
}

/// Explicit second-order method with binary-searched steps.
///
/// Per iteration: `γ₋ = σ_min(∇F)/(12·s·‖F‖)`, `γ₊ = cap`; take `γ₊` if
/// `γ₊ < 1/(8·s·‖ẑ(γ₊) − z_t‖)`, else `γ₋` if `γ₋ ≥ γ₊`, else bisect.
pub fn homp_p2_run<F: VectorField + ?Sized>(
    field: &F,
    smoothness: &SmoothnessSpec,
    z1: &Vector,
    config: &SolverConfig,
) -> Result<SolverReport> {
    if config.order != 2 {
        return Err(Error::Config(format!(
            "the explicit solver is second order, got order {}",
            config.order
        )));
    }
    let band_scale = config.band_scale.unwrap_or_else(|| default_p2_band_scale(smoothness));
    let cap = config.cap();
    let horizon = config.iterations;
    outer_loop(field, z1, config, |t, ctx| {
        let gamma_minus = ctx.delta(band_scale);
        let plus = ctx.resolvent_step(cap)?;
        if cap < 1.0 / (8.0 * band_scale * plus.displacement) {
            return Ok(Step {
                gamma: cap,
                zhat: plus.zhat,
                residual: plus.residual,
                branch: Branch::CapPlus,
                inner_iters: 1,
            });
        }
        if gamma_minus >= cap {
            let minus = ctx.resolvent_step(gamma_minus)?;
            return Ok(Step {
                gamma: gamma_minus,
                zhat: minus.zhat,
                residual: minus.residual,
                branch: Branch::CapMinus,
                inner_iters: 2,
            });
        }
        let (gamma, state) = binary_search_gamma(ctx, gamma_minus, cap, horizon, band_scale).map_err(|e| match e {
            Error::Bracket { .. } => Error::SearchFailure {
                iteration: t,
                reason: e.to_string(),
                state: Box::new(GammaSearchState::new(gamma_minus, cap, gamma_minus, f64::NAN, horizon)),
            },
            other => other,
        })?;
        let step = ctx.resolvent_step(gamma)?;
        Ok(Step {
            gamma,
            zhat: step.zhat,
            residual: step.residual,
            branch: Branch::Searched,
            inner_iters: 1 + state.history.len(),
        })
    })
}

/// General-order method with a Newton oracle for the implicit step.
///
/// The step is bisected towards `γ = p!/(24·s·L_p·‖ẑ(γ) − z_t‖^{p−1})`
/// between a lower bracket and the cap, with the same step budget as the
/// second-order search, and must land in the `[1/32, 1/16]` band.
pub fn homp_general_run<F: VectorField + ?Sized>(
    field: &F,
    order: usize,
    smoothness: &SmoothnessSpec,
    z1: &Vector,
    config: &SolverConfig,
) -> Result<SolverReport> {
    check_order(field, order)?;
    let lp = band_lipschitz(smoothness, order)?;
    let band_scale = config.band_scale.unwrap_or(1.0);
    let pf = factorial(order);
    let c_mid = 24.0 * band_scale;
    let power = (order - 1) as i32;
    let target = move |s: f64| pf / (c_mid * lp * s.powi(power));
    let band_low = move |s: f64| pf / (32.0 * lp * s.powi(power));
    let band_high = move |s: f64| pf / (16.0 * lp * s.powi(power));
    let cap = config.cap();
    let horizon = config.iterations;
    let tol = config.newton_tol;
    let max_iter = config.newton_max_iter;

    outer_loop(field, z1, config, |t, ctx| {
        let model = TaylorModel { field, order, ctx };
        let newton_iters = Cell::new(0usize);
        let mut probe = |gamma: f64| -> Result<Option<ImplicitSolution>> {
            // the run holds every step to tol·(1 + ‖F(z_t)‖), tighter than the
            // oracle's own tol·(1 + γ‖F(z_t)‖) once γ > 1
            let scaled = tol * (1.0 + ctx.f_norm) / (1.0 + gamma * ctx.f_norm);
            match model.solve(gamma, scaled.min(tol), max_iter) {
                Ok(sol) => {
                    newton_iters.set(newton_iters.get() + sol.iters);
                    Ok(Some(sol))
                }
                Err(Error::OracleFailure { iters, .. }) => {
                    newton_iters.set(newton_iters.get() + iters);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        };
        let displacement = |sol: &ImplicitSolution| (&sol.zhat - &ctx.z).norm();

        if let Some(sol) = probe(cap)? {
            if cap <= band_high(displacement(&sol)) {
                return Ok(Step {
                    gamma: cap,
                    residual: sol.residual,
                    zhat: sol.zhat,
                    branch: Branch::CapPlus,
                    inner_iters: 1 + newton_iters.get(),
                });
            }
        }

        // Lower bracket: with s ≤ ‖F‖/σ_min this satisfies γ ≤ target(s(γ));
        // it coincides with δ of the second-order search when p = 2.
        let mut gamma_minus = pf / (c_mid * lp) * (ctx.sigma_min / ctx.f_norm).powi(power);
        let mut probes = 1;
        let mut halvings = 0;
        loop {
            if gamma_minus == 0.0 {
                break;
            }
            probes += 1;
            match probe(gamma_minus)? {
                Some(sol) if gamma_minus <= target(displacement(&sol)) => break,
                _ if halvings < MAX_HALVINGS => {
                    gamma_minus *= 0.5;
                    halvings += 1;
                }
                _ => gamma_minus = 0.0,
            }
        }

        if gamma_minus >= cap {
            let (gamma, sol) = settle(&mut probe, gamma_minus)?;
            return Ok(Step {
                gamma,
                residual: sol.residual,
                zhat: sol.zhat,
                branch: Branch::CapMinus,
                inner_iters: probes + newton_iters.get(),
            });
        }

        let delta = gamma_minus;
        let c = ctx.derivative_bound(delta);
        let mut state = GammaSearchState::new(gamma_minus, cap, delta, c, horizon);
        let upper = state.bisect(|g| Ok(probe(g)?.map(|sol| target(displacement(&sol)))))?;
        probes += state.history.len();
        let (gamma, sol) = settle(&mut probe, upper)?;
        let s = displacement(&sol);
        if !(gamma >= band_low(s) * (1.0 - 1e-9) && gamma <= band_high(s) * (1.0 + 1e-9)) {
            return Err(Error::SearchFailure {
                iteration: t,
                reason: format!(
                    "step {gamma:e} outside band [{:e}, {:e}] for displacement {s:e}",
                    band_low(s),
                    band_high(s)
                ),
                state: Box::new(state),
            });
        }
        Ok(Step {
            gamma,
            residual: sol.residual,
            zhat: sol.zhat,
            branch: Branch::Searched,
            inner_iters: probes + newton_iters.get(),
        })
    })
}

/// Evaluates the oracle at `gamma`, halving on failure.
fn settle<P>(probe: &mut P, mut gamma: f64) -> Result<(f64, ImplicitSolution)>
where
    P: FnMut(f64) -> Result<Option<ImplicitSolution>>,
{
    for _ in 0..=MAX_HALVINGS {
        if let Some(sol) = probe(gamma)? {
            return Ok((gamma, sol));
        }
        gamma *= 0.5;
    }
    Err(Error::OracleFailure {
        iters: MAX_HALVINGS,
        residual: f64::NAN,
    })
}
