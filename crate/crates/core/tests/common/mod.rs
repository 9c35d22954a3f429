#![allow(dead_code)]

use homp_core::problems::{make_problem, Problem, ProblemKind, ProblemSpec};
use homp_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_ish(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0) * scale)
}

pub fn in_ball(rng: &mut ChaCha8Rng, center: &Vector, radius: f64) -> Vector {
    let dir = gaussian_ish(rng, center.len(), 1.0);
    let r = radius * rng.gen_range(0.0..=1.0f64).powf(1.0 / center.len() as f64);
    let n = dir.norm();
    if n == 0.0 {
        center.clone()
    } else {
        center + dir * (r / n)
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0))
}

/// Monotone `M = GᵀG/n + (K − Kᵀ)/2`.
pub fn monotone_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = random_matrix(rng, n);
    let k = random_matrix(rng, n);
    g.transpose() * &g / n as f64 + (&k - k.transpose()) * 0.5
}

pub fn rotation() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

pub fn e1(n: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[0] = 1.0;
    e
}

/// Every shipped problem kind at a small size.
pub fn shipped() -> Vec<Problem> {
    [
        ProblemSpec::new(ProblemKind::Bilinear, 3, 1),
        ProblemSpec::new(ProblemKind::CubicReg, 4, 7),
        ProblemSpec::new(ProblemKind::QuarticReg, 3, 11),
        ProblemSpec::new(ProblemKind::MatrixGame, 3, 5),
        ProblemSpec::new(ProblemKind::MonotoneQuadratic, 5, 2),
    ]
    .iter()
    .map(|s| make_problem(s).unwrap())
    .collect()
}
