//! Constraint sets, Bregman divergences and the prox step.

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::vectorfield::check_dim;

/// Coordinates of entropy iterates are clamped to this floor before logs.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Feasible sets with closed-form prox steps.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    WholeSpace { dim: usize },
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
    Simplex { dim: usize },
    /// Cartesian product; vectors are split into consecutive blocks.
    Product(Vec<ConstraintSet>),
}

impl ConstraintSet {
    pub fn whole_space(dim: usize) -> Self {
        Self::WholeSpace { dim }
    }

    pub fn simplex(dim: usize) -> Self {
        Self::Simplex { dim }
    }

    pub fn bounded_box(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.len(), &upper)?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("box needs lower <= upper coordinatewise".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::WholeSpace { dim } | Self::Simplex { dim } => *dim,
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
            Self::Product(parts) => parts.iter().map(Self::dim).sum(),
        }
    }

    /// True for `ℝⁿ`, including products of whole spaces.
    pub fn is_whole_space(&self) -> bool {
        match self {
            Self::WholeSpace { .. } => true,
            Self::Product(parts) => parts.iter().all(Self::is_whole_space),
            _ => false,
        }
    }

    /// Splits `z` into the blocks of a product set.
    pub fn blocks(&self, z: &Vector) -> Vec<Vector> {
        match self {
            Self::Product(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let d = p.dim();
                        let block = z.rows(offset, d).into_owned();
                        offset += d;
                        block
                    })
                    .collect()
            }
            _ => vec![z.clone()],
        }
    }

    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        if z.len() != self.dim() || !z.iter().all(|v| v.is_finite()) {
            return false;
        }
        match self {
            Self::WholeSpace { .. } => true,
            Self::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Self::Ball { center, radius } => (z - center).norm() <= radius + tol,
            Self::Simplex { .. } => z.iter().all(|v| *v >= -tol) && (z.sum() - 1.0).abs() <= tol.max(1e-12),
            Self::Product(parts) => parts
                .iter()
                .zip(self.blocks(z))
                .all(|(p, b)| p.contains(&b, tol)),
        }
    }

    /// Support function `max_{z ∈ set} ⟨w, z⟩` (`+∞` when unbounded in direction `w`).
    pub fn support(&self, w: &Vector) -> f64 {
        match self {
            Self::WholeSpace { .. } => {
                if w.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Box { lower, upper } => w
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(wi, (l, u))| if *wi >= 0.0 { wi * u } else { wi * l })
                .sum(),
            Self::Ball { center, radius } => w.dot(center) + radius * w.norm(),
            Self::Simplex { .. } => w.max(),
            Self::Product(parts) => parts
                .iter()
                .zip(self.blocks(w))
                .map(|(p, b)| p.support(&b))
                .sum(),
        }
    }

    /// Maximizer of `⟨w, z⟩` over the set, for bounded sets.
    pub fn support_point(&self, w: &Vector) -> Option<Vector> {
        match self {
            Self::WholeSpace { .. } => None,
            Self::Box { lower, upper } => Some(Vector::from_iterator(
                w.len(),
                w.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(wi, (l, u))| if *wi >= 0.0 { *u } else { *l }),
            )),
            Self::Ball { center, radius } => {
                let n = w.norm();
                if n == 0.0 {
                    Some(center.clone())
                } else {
                    Some(center + w * (radius / n))
                }
            }
            Self::Simplex { dim } => {
                let mut v = Vector::zeros(*dim);
                v[w.argmax().0] = 1.0;
                Some(v)
            }
            Self::Product(parts) => {
                let mut out = Vec::with_capacity(w.len());
                for (p, b) in parts.iter().zip(self.blocks(w)) {
                    out.extend(p.support_point(&b)?.iter().copied());
                }
                Some(Vector::from_vec(out))
            }
        }
    }
}

/// Distance-generating functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanGeometry {
    /// `d(u) = ½‖u‖²`.
    SquaredEuclidean,
    /// `d(u) = Σ uᵢ ln uᵢ` on the nonnegative orthant.
    NegativeEntropy,
}

impl BregmanGeometry {
    pub fn potential(&self, u: &Vector) -> Result<f64> {
        match self {
            Self::SquaredEuclidean => Ok(0.5 * u.norm_squared()),
            Self::NegativeEntropy => u
                .iter()
                .map(|&v| match v {
                    v if v < 0.0 => Err(Error::Domain(format!("negative coordinate {v} for entropy"))),
                    0.0 => Ok(0.0),
                    v => Ok(v * v.ln()),
                })
                .sum(),
        }
    }

    pub fn grad_potential(&self, u: &Vector) -> Result<Vector> {
        match self {
            Self::SquaredEuclidean => Ok(u.clone()),
            Self::NegativeEntropy => {
                if let Some(v) = u.iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::Domain(format!(
                        "entropy gradient needs positive coordinates, got {v}"
                    )));
                }
                Ok(u.map(|v| v.ln() + 1.0))
            }
        }
    }

    /// `D(u, v) = d(u) − d(v) − ⟨∇d(v), u − v⟩`.
    pub fn divergence(&self, u: &Vector, v: &Vector) -> Result<f64> {
        check_dim(u.len(), v)?;
        match self {
            Self::SquaredEuclidean => Ok(0.5 * (u - v).norm_squared()),
            Self::NegativeEntropy => {
                let mut acc = 0.0;
                for (&ui, &vi) in u.iter().zip(v.iter()) {
                    if !(vi > 0.0) {
                        return Err(Error::Domain(format!(
                            "entropy divergence needs v in the relative interior, got coordinate {vi}"
                        )));
                    }
                    if ui < 0.0 {
                        return Err(Error::Domain(format!("negative coordinate {ui} for entropy")));
                    }
                    acc += if ui == 0.0 { vi } else { ui * (ui / vi).ln() - ui + vi };
                }
                Ok(acc.max(0.0))
            }
        }
    }
}

/// `argmin_{z ∈ set} ⟨g, z − z0⟩ + D(z, z0)`.
pub fn prox_step(geometry: BregmanGeometry, set: &ConstraintSet, z0: &Vector, g: &Vector) -> Result<Vector> {
    check_dim(set.dim(), z0)?;
    check_dim(set.dim(), g)?;
    use BregmanGeometry::*;
    match (geometry, set) {
        (_, ConstraintSet::Product(parts)) => {
            let mut out = Vec::with_capacity(z0.len());
            for ((part, zb), gb) in parts.iter().zip(set.blocks(z0)).zip(set.blocks(g)) {
                out.extend(prox_step(geometry, part, &zb, &gb)?.iter().copied());
            }
            Ok(Vector::from_vec(out))
        }
        (SquaredEuclidean, ConstraintSet::WholeSpace { .. }) => Ok(z0 - g),
        (SquaredEuclidean, ConstraintSet::Box { lower, upper }) => {
            let shifted = z0 - g;
            Ok(Vector::from_iterator(
                shifted.len(),
                shifted
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(v, (l, u))| v.clamp(*l, *u)),
            ))
        }
        (SquaredEuclidean, ConstraintSet::Ball { center, radius }) => {
            let offset = z0 - g - center;
            let dist = offset.norm();
            if dist <= *radius {
                Ok(z0 - g)
            } else {
                Ok(center + offset * (radius / dist))
            }
        }
        (NegativeEntropy, ConstraintSet::Simplex { .. }) => {
            let logits: Vec<f64> = z0
                .iter()
                .zip(g.iter())
                .map(|(z, gi)| z.max(ENTROPY_FLOOR).ln() - gi)
                .collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut out = Vector::from_iterator(logits.len(), logits.iter().map(|l| (l - top).exp()));
            out /= out.sum();
            out.apply(|v| *v = v.max(ENTROPY_FLOOR));
            out /= out.sum();
            Ok(out)
        }
        (geometry, set) => Err(Error::Config(format!(
            "no closed-form prox for {geometry:?} over {}",
            match set {
                ConstraintSet::WholeSpace { .. } => "whole space",
                ConstraintSet::Box { .. } => "a box",
                ConstraintSet::Ball { .. } => "a ball",
                ConstraintSet::Simplex { .. } => "the simplex",
                ConstraintSet::Product(_) => "a product",
            }
        ))),
    }
}
