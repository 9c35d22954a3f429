//! First-order Mirror Prox with a constant step.

use crate::error::{Error, Result};
use crate::geometry::{prox_step, BregmanGeometry, ConstraintSet};
use crate::linalg::Vector;
use crate::report::{Branch, IterateRecord, SolverReport};
use crate::vectorfield::{check_dim, SmoothnessSpec, VectorField};

/// Feasibility slack used by the per-iteration membership check.
const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MpConfig {
    pub step_gamma: f64,
    pub iterations: usize,
}

impl MpConfig {
    pub fn new(step_gamma: f64, iterations: usize) -> Result<Self> {
        if !(step_gamma > 0.0) || !step_gamma.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {step_gamma}")));
        }
        if iterations == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        Ok(Self { step_gamma, iterations })
    }

    /// `γ = 1/L₁` from the declared constants.
    pub fn default_for(smoothness: &SmoothnessSpec, iterations: usize) -> Result<Self> {
        let l1 = smoothness
            .lipschitz(1)
            .filter(|l| *l > 0.0)
            .ok_or_else(|| Error::Config("default Mirror Prox step needs a positive L_1".into()))?;
        Self::new(1.0 / l1, iterations)
    }
}

fn finite(v: &Vector, iteration: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            what: what.to_string(),
        })
    }
}

/// Runs `T` iterations of
/// `ẑ_t = prox(z_t, γF(z_t))`, `z_{t+1} = prox(z_t, γF(ẑ_t))`.
pub fn mp_run<F: VectorField + ?Sized>(
    field: &F,
    geometry: BregmanGeometry,
    set: &ConstraintSet,
    z1: &Vector,
    config: &MpConfig,
) -> Result<SolverReport> {
    check_dim(field.dim(), z1)?;
    if !set.contains(z1, MEMBERSHIP_TOL) {
        return Err(Error::Config("z1 is not in the constraint set".into()));
    }
    let gamma = config.step_gamma;
    let mut z = z1.clone();
    let mut records = Vec::with_capacity(config.iterations);
    for t in 1..=config.iterations {
        let fz = field.eval(&z);
        finite(&fz, t, "F(z_t)")?;
        let zhat = prox_step(geometry, set, &z, &(&fz * gamma))?;
        let fzhat = field.eval(&zhat);
        finite(&fzhat, t, "F(zhat_t)")?;
        let z_next = prox_step(geometry, set, &z, &(&fzhat * gamma))?;
        finite(&z_next, t, "z_{t+1}")?;
        if !set.contains(&zhat, MEMBERSHIP_TOL) || !set.contains(&z_next, MEMBERSHIP_TOL) {
            return Err(Error::Domain(format!("iterate left the constraint set at iteration {t}")));
        }
        records.push(IterateRecord {
            t,
            step_norm: (&zhat - &z).norm(),
            eg_norm: (&z_next - &zhat).norm(),
            z: std::mem::replace(&mut z, z_next.clone()),
            zhat,
            z_next,
            gamma,
            branch: Branch::Fixed,
            inner_iters: 0,
            implicit_residual: 0.0,
            field_at_z: fz,
            field_at_zhat: fzhat,
        });
    }
    SolverReport::from_records(z1.clone(), config.iterations, records, false)
}
