//! Solution-quality metrics, monitors for the convergence inequalities and
//! empirical rate estimation.

use crate::error::{Error, Result};
use crate::geometry::{BregmanGeometry, ConstraintSet};
use crate::linalg::{self, Matrix, Vector};
use crate::report::{averaged_output, IterateRecord, SolverReport};
use crate::vectorfield::{MinMaxProblem, VectorField};

/// Absolute slack of the trajectory monitors.
pub const TRAJECTORY_TOL: f64 = 1e-9;

/// Relative slack of the telescoping-sum monitor.
pub const SUM_BOUND_TOL: f64 = 1e-6;

/// Bounded set over which the restricted merit is maximized.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceRegion {
    Ball { center: Vector, radius: f64 },
    Set(ConstraintSet),
    Cloud(Vec<Vector>),
}

impl ReferenceRegion {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Usage(format!("reference radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn cloud(points: Vec<Vector>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Usage("empty reference cloud".into()));
        }
        Ok(Self::Cloud(points))
    }

    /// Ball around `z1` with radius [`reference_radius`].
    pub fn around_start(z1: &Vector, z_star: Option<&Vector>) -> Self {
        Self::Ball {
            center: z1.clone(),
            radius: reference_radius(z1, z_star),
        }
    }

    /// `max_{z ∈ region} ⟨w, z⟩`.
    pub fn support(&self, w: &Vector) -> Result<f64> {
        match self {
            Self::Ball { center, radius } => Ok(w.dot(center) + radius * w.norm()),
            Self::Set(set) => Ok(set.support(w)),
            Self::Cloud(points) => points
                .iter()
                .map(|p| p.dot(w))
                .reduce(f64::max)
                .ok_or_else(|| Error::Usage("empty reference cloud".into())),
        }
    }
}

/// `2‖z1 − z*‖` when the solution is known, else `2‖z1‖ + 1`.
pub fn reference_radius(z1: &Vector, z_star: Option<&Vector>) -> f64 {
    let r = match z_star {
        Some(s) => 2.0 * (z1 - s).norm(),
        None => 2.0 * z1.norm() + 1.0,
    };
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Running sums behind the merit: `Γ`, `Σγ F(ẑ)` and `Σγ⟨F(ẑ), ẑ⟩`.
#[derive(Debug, Clone)]
struct MeritSums {
    gamma: f64,
    w: Vector,
    c: f64,
}

impl MeritSums {
    fn new(dim: usize) -> Self {
        Self {
            gamma: 0.0,
            w: Vector::zeros(dim),
            c: 0.0,
        }
    }

    fn push(&mut self, r: &IterateRecord) {
        self.gamma += r.gamma;
        self.w.axpy(r.gamma, &r.field_at_zhat, 1.0);
        self.c += r.gamma * r.field_at_zhat.dot(&r.zhat);
    }

    fn merit(&self, region: &ReferenceRegion) -> Result<f64> {
        let w = &self.w / self.gamma;
        Ok(self.c / self.gamma + region.support(&(-w))?)
    }
}

/// `max_{z ∈ region} (1/Γ_T) Σ γ_t⟨F(ẑ_t), ẑ_t − z⟩`.
pub fn restricted_merit(records: &[IterateRecord], region: &ReferenceRegion) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| Error::Usage("merit of an empty trajectory".into()))?;
    let mut sums = MeritSums::new(first.zhat.len());
    records.iter().for_each(|r| sums.push(r));
    sums.merit(region)
}

/// Merit of every prefix of the trajectory.
pub fn merit_series(records: &[IterateRecord], region: &ReferenceRegion) -> Result<Vec<(usize, f64)>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let mut sums = MeritSums::new(first.zhat.len());
    records
        .iter()
        .map(|r| {
            sums.push(r);
            Ok((r.t, sums.merit(region)?))
        })
        .collect()
}

/// `(1/Γ_T) Σ γ_t⟨F(ẑ_t), ẑ_t − z⟩` at a single reference point.
pub fn weighted_gap_at(records: &[IterateRecord], z: &Vector) -> Result<f64> {
    restricted_merit(records, &ReferenceRegion::Cloud(vec![z.clone()]))
}

/// `max_{u ∈ region} ⟨F(z), z − u⟩`.
pub fn strong_gap<F: VectorField + ?Sized>(field: &F, z: &Vector, region: &ReferenceRegion) -> Result<f64> {
    let fz = field.eval(z);
    Ok(fz.dot(z) + region.support(&(-fz))?)
}

/// `max_ŷ g(x̄, ŷ) − min_x̂ g(x̂, ȳ)` from the closed-form best responses.
pub fn duality_gap(problem: &MinMaxProblem, x_bar: &Vector, y_bar: &Vector) -> Result<f64> {
    let g = &problem.objective;
    let y_best = g
        .best_response_y(x_bar, &problem.set_y)
        .ok_or_else(|| Error::Unsupported("no closed-form best response in y".into()))?;
    let x_best = g
        .best_response_x(y_bar, &problem.set_x)
        .ok_or_else(|| Error::Unsupported("no closed-form best response in x".into()))?;
    Ok(g.value(x_bar, &y_best) - g.value(&x_best, y_bar))
}

/// `‖F(z)‖₂`.
pub fn fnorm_residual<F: VectorField + ?Sized>(field: &F, z: &Vector) -> f64 {
    field.eval(z).norm()
}

/// Fills the `merit` and `fnorm` series of a report. `fnorm` is `‖F(z_t)‖`.
pub fn annotate(report: &mut SolverReport, region: &ReferenceRegion) -> Result<()> {
    let merit = merit_series(&report.records, region)?;
    let fnorm = report.records.iter().map(|r| (r.t, r.field_at_z.norm())).collect();
    report.diagnostics.insert("merit".into(), merit);
    report.diagnostics.insert("fnorm".into(), fnorm);
    Ok(())
}

/// Adds the duality gap of every prefix average as the `gap` series.
pub fn annotate_gap(report: &mut SolverReport, problem: &MinMaxProblem) -> Result<()> {
    let mut gaps = Vec::with_capacity(report.records.len());
    let mut acc = Vector::zeros(report.z1.len());
    let mut total = 0.0;
    for r in &report.records {
        acc.axpy(r.gamma, &r.zhat, 1.0);
        total += r.gamma;
        let (x, y) = problem.split(&(&acc / total));
        gaps.push((r.t, duality_gap(problem, &x, &y)?));
    }
    report.diagnostics.insert("gap".into(), gaps);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Telescoping inequality
/// `Σγ_t⟨F(ẑ_t), ẑ_t − z⟩ + ¼Σ‖ẑ_t − z_t‖² + ¼Σ‖z_{t+1} − ẑ_t‖² ≤ D(z, z₁) − D(z, z_{T+1})`.
pub fn sum_bound_monitor(
    records: &[IterateRecord],
    geometry: BregmanGeometry,
    z1: &Vector,
    z_ref: &Vector,
) -> Result<SumBoundCheck> {
    let mut lhs = 0.0;
    for r in records {
        lhs += r.gamma * r.field_at_zhat.dot(&(&r.zhat - z_ref));
        lhs += 0.25 * r.step_norm * r.step_norm + 0.25 * r.eg_norm * r.eg_norm;
    }
    let last = records.last().map(|r| &r.z_next).unwrap_or(z1);
    let rhs = geometry.divergence(z_ref, z1)? - geometry.divergence(z_ref, last)?;
    Ok(SumBoundCheck {
        lhs,
        rhs,
        satisfied: lhs <= rhs + SUM_BOUND_TOL * (1.0 + rhs.abs()),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryBoundReport {
    /// Iterations with `‖F(z_t)‖ > 4√t·L₁·‖z₁ − z*‖`.
    pub field_violations: Vec<usize>,
    /// Prefixes whose `(1/8)Σ‖z_{t+1} − z_t‖²` exceeds `D(z*, z₁)`.
    pub step_violations: Vec<usize>,
    pub step_sum: f64,
    pub step_bound: f64,
}

impl TrajectoryBoundReport {
    pub fn ok(&self) -> bool {
        self.field_violations.is_empty() && self.step_violations.is_empty()
    }
}

/// Checks the a-priori trajectory bounds for squared-Euclidean runs.
pub fn trajectory_bound_monitor(
    records: &[IterateRecord],
    z1: &Vector,
    z_star: &Vector,
    l1: f64,
) -> TrajectoryBoundReport {
    let dist = (z1 - z_star).norm();
    let step_bound = 0.5 * dist * dist;
    let mut report = TrajectoryBoundReport {
        step_bound,
        ..Default::default()
    };
    let mut step_sum = 0.0;
    for r in records {
        let bound = 4.0 * (r.t as f64).sqrt() * l1 * dist;
        if r.field_at_z.norm() > bound + TRAJECTORY_TOL {
            report.field_violations.push(r.t);
        }
        step_sum += 0.125 * (&r.z_next - &r.z).norm_squared();
        if step_sum > step_bound + TRAJECTORY_TOL {
            report.step_violations.push(r.t);
        }
    }
    report.step_sum = step_sum;
    report
}

/// Least-squares line through `(log T, log value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub grid: Vec<(f64, f64)>,
}

pub fn fit_rate(grid: &[(f64, f64)]) -> Result<RateFit> {
    if grid.len() < 3 {
        return Err(Error::Usage(format!("rate fit needs at least 3 points, got {}", grid.len())));
    }
    if let Some((t, v)) = grid.iter().find(|(t, v)| !(*t > 0.0) || !(*v > 0.0)) {
        return Err(Error::Domain(format!("rate fit needs positive pairs, got ({t}, {v})")));
    }
    if grid.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Usage("rate grid must be strictly increasing in T".into()));
    }
    let xs: Vec<f64> = grid.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = grid.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        grid: grid.to_vec(),
    })
}

/// Spectral facts about a Jacobian split as `M = S + A`, `S` symmetric and
/// `A` antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub min_symmetric_eigenvalue: f64,
    pub min_real_eigenvalue: f64,
    /// `Some(ok)` when `S ⪰ 0`: every eigenvalue of `M` has real part ≥ −1e−10.
    pub real_parts_nonnegative: Option<bool>,
    /// `Some(ok)` when `S ≻ 0`: `I + γM` is invertible for `γ ∈ {10⁻³, …, 10³}`.
    pub sampled_invertible: Option<bool>,
}

impl SpectrumReport {
    pub fn holds(&self) -> bool {
        self.real_parts_nonnegative.unwrap_or(true) && self.sampled_invertible.unwrap_or(true)
    }
}

/// Tolerance on `λ_min(S)` for treating the symmetric part as PSD.
pub const PSD_TOL: f64 = 1e-12;

pub fn jacobian_spectrum_check(m: &Matrix) -> Result<SpectrumReport> {
    let sym = (m + m.transpose()) * 0.5;
    let min_symmetric_eigenvalue = linalg::symmetric_eigenvalues(&sym)?
        .first()
        .copied()
        .unwrap_or(0.0);
    let min_real_eigenvalue = linalg::eigenvalues(m)?
        .iter()
        .map(|e| e.re)
        .fold(f64::INFINITY, f64::min);
    let real_parts_nonnegative = (min_symmetric_eigenvalue >= -PSD_TOL).then_some(min_real_eigenvalue >= -1e-10);
    let sampled_invertible = if min_symmetric_eigenvalue > PSD_TOL {
        let n = m.nrows();
        let mut ok = true;
        for k in -3..=3 {
            let gamma = 10f64.powi(k);
            let shifted = Matrix::identity(n, n) + m * gamma;
            ok &= linalg::sigma_min(&shifted)? > 0.0;
        }
        Some(ok)
    } else {
        None
    };
    Ok(SpectrumReport {
        min_symmetric_eigenvalue,
        min_real_eigenvalue,
        real_parts_nonnegative,
        sampled_invertible,
    })
}

/// `⟨F(z), z̄_T − z⟩` and the weighted gap it is dominated by for monotone `F`.
pub fn averaging_dominance<F: VectorField + ?Sized>(
    field: &F,
    records: &[IterateRecord],
    z: &Vector,
) -> Result<(f64, f64)> {
    let z_bar = averaged_output(records)?;
    Ok((field.eval(z).dot(&(z_bar - z)), weighted_gap_at(records, z)?))
}
