//! Per-iteration records and run summaries shared by every solver.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// How the step size of an iteration was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// The upper cap `γ₊` already satisfied the band.
    CapPlus,
    /// The lower bracket `γ₋` exceeded the cap.
    CapMinus,
    /// Bisection between the brackets.
    Searched,
    /// Constant step (first-order Mirror Prox).
    Fixed,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::CapPlus => "cap_plus",
            Branch::CapMinus => "cap_minus",
            Branch::Searched => "searched",
            Branch::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cap_plus" => Ok(Branch::CapPlus),
            "cap_minus" => Ok(Branch::CapMinus),
            "searched" => Ok(Branch::Searched),
            "fixed" => Ok(Branch::Fixed),
            other => Err(Error::Usage(format!("unknown branch {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterateRecord {
    /// 1-based iteration index.
    pub t: usize,
    pub z: Vector,
    pub zhat: Vector,
    pub z_next: Vector,
    pub gamma: f64,
    /// `‖ẑ_t − z_t‖`.
    pub step_norm: f64,
    /// `‖z_{t+1} − ẑ_t‖`.
    pub eg_norm: f64,
    pub branch: Branch,
    /// Bisection probes plus Newton iterations spent on this step.
    pub inner_iters: usize,
    pub implicit_residual: f64,
    /// `F(z_t)`.
    pub field_at_z: Vector,
    /// `F(ẑ_t)`.
    pub field_at_zhat: Vector,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub records: Vec<IterateRecord>,
    /// `Γ_T = Σ γ_t`.
    pub gamma_total: f64,
    /// `(1/Γ_T) Σ γ_t ẑ_t`.
    pub z_bar: Vector,
    pub z1: Vector,
    /// Iterations requested.
    pub horizon: usize,
    /// Set when `F(z_t)` vanished and the run stopped early.
    pub converged: bool,
    /// Named series keyed by iteration index.
    pub diagnostics: BTreeMap<String, Vec<(usize, f64)>>,
}

impl SolverReport {
    pub(crate) fn from_records(z1: Vector, horizon: usize, records: Vec<IterateRecord>, converged: bool) -> Result<Self> {
        let z_bar = averaged_output(&records)?;
        let gamma_total = records.iter().map(|r| r.gamma).sum();
        Ok(Self {
            records,
            gamma_total,
            z_bar,
            z1,
            horizon,
            converged,
            diagnostics: BTreeMap::new(),
        })
    }

    /// `z_{T+1}`, the last extragradient iterate.
    pub fn last_iterate(&self) -> &Vector {
        self.records.last().map(|r| &r.z_next).unwrap_or(&self.z1)
    }

    pub fn series(&self, name: &str) -> Option<&[(usize, f64)]> {
        self.diagnostics.get(name).map(Vec::as_slice)
    }
}

/// `(1/Γ_T) Σ γ_t ẑ_t`.
pub fn averaged_output(records: &[IterateRecord]) -> Result<Vector> {
    let first = records
        .first()
        .ok_or_else(|| Error::Usage("cannot average an empty trajectory".into()))?;
    let mut acc = Vector::zeros(first.zhat.len());
    let mut total = 0.0;
    for r in records {
        if !(r.gamma > 0.0) {
            return Err(Error::Usage(format!("record {} has non-positive weight {}", r.t, r.gamma)));
        }
        acc.axpy(r.gamma, &r.zhat, 1.0);
        total += r.gamma;
    }
    Ok(acc / total)
}

#[cfg(test)]
pub(crate) fn record(t: usize, gamma: f64, zhat: &[f64]) -> IterateRecord {
    let zhat = Vector::from_row_slice(zhat);
    let zero = Vector::zeros(zhat.len());
    IterateRecord {
        t,
        z: zero.clone(),
        zhat,
        z_next: zero.clone(),
        gamma,
        step_norm: 0.0,
        eg_norm: 0.0,
        branch: Branch::Fixed,
        inner_iters: 0,
        implicit_residual: 0.0,
        field_at_z: zero.clone(),
        field_at_zhat: zero,
    }
}
