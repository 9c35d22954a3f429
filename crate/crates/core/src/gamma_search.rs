//! Step-size bisection for the explicit second-order step.
//!
//! For a fixed base point `z_t` the resolvent step is
//! `ẑ(γ) = z_t − γ(I + γ∇F(z_t))⁻¹F(z_t)` and the search looks for the
//! crossing of `γ` with `q(γ) = 1/(12·s·‖ẑ(γ) − z_t‖)`, where `s` is the
//! band scale. The returned value is the upper end of the final bracket.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::vectorfield::{check_dim, VectorField};

/// Hard ceiling on bisection steps.
pub const MAX_SEARCH_STEPS: usize = 200;

/// Relative slack allowed when validating a bracket.
const BRACKET_SLACK: f64 = 1e-12;

/// Field data at the base point, shared by every probe of one search.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub z: Vector,
    pub f: Vector,
    pub jacobian: Matrix,
    pub f_norm: f64,
    pub sigma_min: f64,
    pub jacobian_norm: f64,
}

/// `ẑ(γ)` and the residual of its defining linear equation.
#[derive(Debug, Clone)]
pub struct ResolventStep {
    pub zhat: Vector,
    pub displacement: f64,
    pub residual: f64,
}

impl StepContext {
    pub fn new<F: VectorField + ?Sized>(field: &F, z: &Vector) -> Result<Self> {
        check_dim(field.dim(), z)?;
        let f = field.eval(z);
        let jacobian = field.jacobian(z);
        if !f.iter().chain(jacobian.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: 0,
                what: "field or Jacobian at the base point".into(),
            });
        }
        let sigma_min = linalg::sigma_min(&jacobian)?;
        let jacobian_norm = linalg::operator_norm(&jacobian);
        Ok(Self {
            z: z.clone(),
            f_norm: f.norm(),
            f,
            jacobian,
            sigma_min,
            jacobian_norm,
        })
    }

    /// Solves `γ(F + ∇F(ẑ − z)) + ẑ − z = 0` with one dense solve.
    pub fn resolvent_step(&self, gamma: f64) -> Result<ResolventStep> {
        if !(gamma >= 0.0) {
            return Err(Error::Usage(format!("step size must be nonnegative, got {gamma}")));
        }
        if gamma == 0.0 || self.f_norm == 0.0 {
            return Ok(ResolventStep {
                zhat: self.z.clone(),
                displacement: 0.0,
                residual: 0.0,
            });
        }
        let n = self.z.len();
        let system = Matrix::identity(n, n) + &self.jacobian * gamma;
        let d = linalg::solve(&system, &self.f)?;
        let zhat = &self.z - &d * gamma;
        let h = &zhat - &self.z;
        let residual = ((&self.f + &self.jacobian * &h) * gamma + &h).norm();
        Ok(ResolventStep {
            displacement: h.norm(),
            zhat,
            residual,
        })
    }

    /// `δ = σ_min(∇F) / (12·s·‖F‖)`.
    pub fn delta(&self, band_scale: f64) -> f64 {
        self.sigma_min / (12.0 * band_scale * self.f_norm)
    }

    /// Derivative bound on `q` for `γ ≥ δ`:
    /// `C = δ⁻²·((δ⁻¹ + ‖∇F‖) / (12·σ_min·‖F‖))³`.
    pub fn derivative_bound(&self, delta: f64) -> f64 {
        let inner = (1.0 / delta + self.jacobian_norm) / (12.0 * self.sigma_min * self.f_norm);
        inner.powi(3) / (delta * delta)
    }

    /// `q(γ) = 1 / (12·s·‖(γ⁻¹I + ∇F)⁻¹F‖)`.
    pub fn q_value(&self, gamma: f64, band_scale: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::Usage(format!("q needs a positive step, got {gamma}")));
        }
        if self.f_norm == 0.0 {
            return Ok(f64::INFINITY);
        }
        let n = self.z.len();
        let system = Matrix::identity(n, n) / gamma + &self.jacobian;
        let x = linalg::solve(&system, &self.f)?;
        Ok(1.0 / (12.0 * band_scale * x.norm()))
    }
}

/// `ẑ = z_t − γ(I + γ∇F(z_t))⁻¹F(z_t)`.
pub fn implicit_step_p2<F: VectorField + ?Sized>(field: &F, z: &Vector, gamma: f64) -> Result<Vector> {
    Ok(StepContext::new(field, z)?.resolvent_step(gamma)?.zhat)
}

/// Convenience wrapper around [`StepContext::q_value`].
pub fn q_value<F: VectorField + ?Sized>(field: &F, z: &Vector, gamma: f64, band_scale: f64) -> Result<f64> {
    StepContext::new(field, z)?.q_value(gamma, band_scale)
}

/// Smallest singular value; see [`linalg::sigma_min`].
pub fn sigma_min(m: &Matrix) -> Result<f64> {
    linalg::sigma_min(m)
}

/// Which side of the bracket a probe moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    /// `γ̄ ≤ D`, the lower end moved up.
    RaisedLower,
    /// `γ̄ > D` (or the step oracle failed), the upper end moved down.
    LoweredUpper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub gamma: f64,
    /// `D(γ̄)`; `None` when the step oracle failed at this probe.
    pub target: Option<f64>,
    pub outcome: ProbeOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSearchState {
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub gamma_bar: f64,
    pub delta: f64,
    pub c: f64,
    pub c_bar: f64,
    pub budget: usize,
    pub initial_width: f64,
    pub history: Vec<Probe>,
}

impl GammaSearchState {
    /// Sets up a bracket and the step budget
    /// `N = ⌈log₂(100·C̄·(γ₊ − γ₋)·max{T,1}/δ)⌉ + 4`, capped at [`MAX_SEARCH_STEPS`].
    pub fn new(gamma_minus: f64, gamma_plus: f64, delta: f64, c: f64, horizon: usize) -> Self {
        let c_bar = if c.is_nan() { f64::INFINITY } else { c.max(1.0) };
        let width = gamma_plus - gamma_minus;
        let ratio = 100.0 * c_bar * width * (horizon.max(1) as f64) / delta;
        let budget = if width <= 0.0 {
            4
        } else if !(ratio.is_finite()) || !(delta > 0.0) {
            MAX_SEARCH_STEPS
        } else {
            let steps = ratio.log2().ceil().max(0.0) as usize + 4;
            steps.min(MAX_SEARCH_STEPS)
        };
        Self {
            gamma_minus,
            gamma_plus,
            gamma_bar: 0.5 * (gamma_minus + gamma_plus),
            delta,
            c,
            c_bar,
            budget,
            initial_width: width,
            history: Vec::new(),
        }
    }

    pub fn width(&self) -> f64 {
        self.gamma_plus - self.gamma_minus
    }

    /// Runs the bisection; `target(γ)` returns `D(γ)` or `None` if the step
    /// oracle failed. Returns the final upper end.
    pub fn bisect<P>(&mut self, mut target: P) -> Result<f64>
    where
        P: FnMut(f64) -> Result<Option<f64>>,
    {
        for _ in 0..self.budget {
            let probe = self.gamma_bar;
            let d = target(probe)?;
            let outcome = match d {
                Some(d) if probe <= d => {
                    self.gamma_minus = probe;
                    ProbeOutcome::RaisedLower
                }
                _ => {
                    self.gamma_plus = probe;
                    ProbeOutcome::LoweredUpper
                }
            };
            self.history.push(Probe {
                gamma: probe,
                target: d,
                outcome,
            });
            self.gamma_bar = 0.5 * (self.gamma_minus + self.gamma_plus);
        }
        Ok(self.gamma_plus)
    }
}

fn crossing_target(step: &ResolventStep, band_scale: f64) -> f64 {
    1.0 / (12.0 * band_scale * step.displacement)
}

/// Bisection for the crossing `γ = 1/(12·s·‖ẑ(γ) − z_t‖)`.
///
/// The bracket must satisfy `γ₋ ≤ D(γ₋)` and `γ₊ ≥ D(γ₊)`; a
/// zero-width bracket is returned unchanged.
pub fn binary_search_gamma(
    ctx: &StepContext,
    gamma_minus: f64,
    gamma_plus: f64,
    horizon: usize,
    band_scale: f64,
) -> Result<(f64, GammaSearchState)> {
    if !(band_scale > 0.0) {
        return Err(Error::Config(format!("band scale must be positive, got {band_scale}")));
    }
    if !(gamma_minus >= 0.0) || !(gamma_plus >= gamma_minus) || !gamma_plus.is_finite() {
        return Err(Error::Usage(format!(
            "need 0 <= gamma_minus <= gamma_plus < inf, got [{gamma_minus}, {gamma_plus}]"
        )));
    }
    let target = |gamma: f64| -> Result<f64> { Ok(crossing_target(&ctx.resolvent_step(gamma)?, band_scale)) };
    if gamma_plus > gamma_minus {
        let lower = target(gamma_minus)?;
        let upper = target(gamma_plus)?;
        if gamma_minus > lower * (1.0 + BRACKET_SLACK) || gamma_plus < upper * (1.0 - BRACKET_SLACK) {
            return Err(Error::Bracket {
                lower: gamma_minus,
                upper: gamma_plus,
                target_lower: lower,
                target_upper: upper,
            });
        }
    }
    let delta = ctx.delta(band_scale);
    let c = ctx.derivative_bound(delta);
    let mut state = GammaSearchState::new(gamma_minus, gamma_plus, delta, c, horizon);
    let gamma = state.bisect(|g| target(g).map(Some))?;
    Ok((gamma, state))
}
