//! Dense kernels shared by the solvers.
//!
//! Everything here works on small dense matrices (`n <= MAX_DENSE_DIM`).
//! Resolvents are always computed through a factorization and a solve,
//! never through an explicit inverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest dimension accepted by the SVD-backed routines.
pub const MAX_DENSE_DIM: usize = 200;

/// Systems whose condition estimate exceeds this are rejected by [`solve`].
pub const MAX_CONDITION: f64 = 1e14;

fn check_square(m: &Matrix) -> Result<usize> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m.ncols(),
        });
    }
    if n > MAX_DENSE_DIM {
        return Err(Error::TooLarge(n));
    }
    Ok(n)
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.nrows().max(m.ncols()) > MAX_DENSE_DIM {
        return Err(Error::TooLarge(m.nrows().max(m.ncols())));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    Ok(singular_values(m)?.last().copied().unwrap_or(0.0))
}

/// `σ_max / σ_min`, infinite for singular matrices.
pub fn condition_estimate(m: &Matrix) -> Result<f64> {
    check_square(m)?;
    let sv = singular_values(m)?;
    let (Some(&hi), Some(&lo)) = (sv.first(), sv.last()) else {
        return Ok(1.0);
    };
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Solves `m x = rhs` by LU with partial pivoting plus one step of
/// iterative refinement.
pub fn solve(m: &Matrix, rhs: &Vector) -> Result<Vector> {
    let n = check_square(m)?;
    if rhs.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rhs.len(),
        });
    }
    if !m.iter().all(|v| v.is_finite()) || !rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::LinearSolve {
            reason: "non-finite input".into(),
            condition: f64::NAN,
        });
    }
    let condition = condition_estimate(m)?;
    if !(condition <= MAX_CONDITION) {
        return Err(Error::LinearSolve {
            reason: "matrix is singular or ill-conditioned".into(),
            condition,
        });
    }
    let lu = m.clone().lu();
    let mut x = lu.solve(rhs).ok_or_else(|| Error::LinearSolve {
        reason: "LU factorization is singular".into(),
        condition,
    })?;
    let residual = rhs - m * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    Ok(x)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn operator_norm(m: &Matrix) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    // Deterministic start with no symmetry that could hide a singular direction.
    let mut v = Vector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient of the converged vector is the most accurate estimate.
    let rq = v.dot(&(&gram * &v));
    rq.max(lambda).max(0.0).sqrt()
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    check_square(m)?;
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect())
}

/// Eigenvalues of the symmetric matrix `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_square(m)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}
