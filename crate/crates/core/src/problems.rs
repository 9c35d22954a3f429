//! Seeded test problems with declared smoothness constants, known
//! solutions and closed-form best responses.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BregmanGeometry, ConstraintSet};
use crate::linalg::{self, Matrix, Vector};
use crate::vectorfield::{gda_field, LinearField, MinMaxProblem, SaddleFunction, SmoothnessSpec, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Bilinear,
    CubicReg,
    QuarticReg,
    MatrixGame,
    MonotoneQuadratic,
}

/// Feasible set of each player in a bilinear problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlayerSet {
    WholeSpace,
    Ball { radius: f64 },
    Box { bound: f64 },
}

fn default_rho() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Per-player dimension for min-max kinds, total dimension for
    /// `monotone_quadratic`.
    pub n: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit coupling matrix (rows); drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// Player sets for `bilinear`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<PlayerSet>,
    /// Radius of the origin-centred ball on which local constants are declared.
    #[serde(default = "default_radius")]
    pub domain_radius: f64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            rho: default_rho(),
            seed,
            matrix: None,
            b: None,
            c: None,
            sets: None,
            domain_radius: default_radius(),
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_matrix(mut self, rows: Vec<Vec<f64>>) -> Self {
        self.matrix = Some(rows);
        self
    }
}

/// A generated problem: the operator plus everything the solvers and
/// monitors need to know about it.
#[derive(Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub field: Arc<dyn VectorField>,
    pub geometry: BregmanGeometry,
    pub set: ConstraintSet,
    pub smoothness: SmoothnessSpec,
    pub known_solution: Option<Vector>,
    /// Present for the min-max kinds.
    pub minmax: Option<MinMaxProblem>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("spec", &self.spec)
            .field("geometry", &self.geometry)
            .field("set", &self.set)
            .field("smoothness", &self.smoothness)
            .field("known_solution", &self.known_solution)
            .finish()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }
}

/// `n×n` matrix with i.i.d. uniform[−1, 1] entries scaled by `1/√n`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let scale = 1.0 / (rows.max(cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0) * scale)
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
    }
    let m = Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Config("matrix has non-finite entries".into()));
    }
    Ok(m)
}

fn vector_or_zero(v: &Option<Vec<f64>>, n: usize, name: &str) -> Result<Vector> {
    match v {
        None => Ok(Vector::zeros(n)),
        Some(v) if v.len() == n => Ok(Vector::from_row_slice(v)),
        Some(v) => Err(Error::Config(format!("{name} has length {}, expected {n}", v.len()))),
    }
}

/// `g = xᵀAy + bᵀx + cᵀy`.
#[derive(Debug, Clone)]
pub struct Bilinear {
    pub a: Matrix,
    pub b: Vector,
    pub c: Vector,
}

impl SaddleFunction for Bilinear {
    fn dims(&self) -> (usize, usize) {
        self.a.shape()
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        x.dot(&(&self.a * y)) + self.b.dot(x) + self.c.dot(y)
    }

    fn grad_x(&self, _x: &Vector, y: &Vector) -> Vector {
        &self.a * y + &self.b
    }

    fn grad_y(&self, x: &Vector, _y: &Vector) -> Vector {
        self.a.tr_mul(x) + &self.c
    }

    fn hessian(&self, _x: &Vector, _y: &Vector) -> Option<Matrix> {
        let (nx, ny) = self.a.shape();
        let mut h = Matrix::zeros(nx + ny, nx + ny);
        h.view_mut((0, nx), (nx, ny)).copy_from(&self.a);
        h.view_mut((nx, 0), (ny, nx)).copy_from(&self.a.transpose());
        Some(h)
    }

    fn derivative_order(&self) -> usize {
        usize::MAX
    }

    fn gradient_dir_derivative(&self, _k: usize, _x: &Vector, _y: &Vector, h: &Vector) -> Option<Vector> {
        Some(Vector::zeros(h.len()))
    }

    fn gradient_dir_jacobian(&self, _k: usize, _x: &Vector, _y: &Vector, h: &Vector) -> Option<Matrix> {
        Some(Matrix::zeros(h.len(), h.len()))
    }

    fn best_response_y(&self, x: &Vector, set_y: &ConstraintSet) -> Option<Vector> {
        set_y.support_point(&self.grad_y(x, &Vector::zeros(self.c.len())))
    }

    fn best_response_x(&self, y: &Vector, set_x: &ConstraintSet) -> Option<Vector> {
        set_x.support_point(&(-self.grad_x(&Vector::zeros(self.b.len()), y)))
    }
}

/// Separable power regularizers around a bilinear coupling:
/// `g = (ρ/3)Σ|xᵢ|³ + xᵀAy − (ρ/3)Σ|yⱼ|³` (cubic) or
/// `g = (ρ/12)Σxᵢ⁴ + xᵀAy − (ρ/12)Σyⱼ⁴` (quartic).
#[derive(Debug, Clone)]
pub struct Regularized {
    pub a: Matrix,
    pub rho: f64,
    pub quartic: bool,
}

impl Regularized {
    /// Sign of the regularizer on coordinate `i` of the stacked vector.
    fn sign(&self, i: usize) -> f64 {
        if i < self.a.nrows() {
            1.0
        } else {
            -1.0
        }
    }

    fn stacked(x: &Vector, y: &Vector) -> Vector {
        MinMaxProblem::stack(x, y)
    }

    /// Derivative of the scalar regularizer gradient `φ'(t)`, order `k`.
    fn phi_derivative(&self, k: usize, t: f64) -> f64 {
        let r = self.rho;
        match (self.quartic, k) {
            (false, 1) => r * t * t.abs(),
            (false, 2) => 2.0 * r * t.abs(),
            (false, 3) => 2.0 * r * t.signum() * (t != 0.0) as u8 as f64,
            (true, 1) => r * t.powi(3) / 3.0,
            (true, 2) => r * t * t,
            (true, 3) => 2.0 * r * t,
            (true, 4) => 2.0 * r,
            _ => 0.0,
        }
    }
}

impl SaddleFunction for Regularized {
    fn dims(&self) -> (usize, usize) {
        self.a.shape()
    }

    fn value(&self, x: &Vector, y: &Vector) -> f64 {
        let reg = |v: &Vector| -> f64 {
            if self.quartic {
                v.iter().map(|t| t.powi(4)).sum::<f64>() * self.rho / 12.0
            } else {
                v.iter().map(|t| t.abs().powi(3)).sum::<f64>() * self.rho / 3.0
            }
        };
        reg(x) + x.dot(&(&self.a * y)) - reg(y)
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        x.map(|t| self.phi_derivative(1, t)) + &self.a * y
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        self.a.tr_mul(x) - y.map(|t| self.phi_derivative(1, t))
    }

    fn hessian(&self, x: &Vector, y: &Vector) -> Option<Matrix> {
        let (nx, ny) = self.a.shape();
        let z = Self::stacked(x, y);
        let mut h = Matrix::zeros(nx + ny, nx + ny);
        for i in 0..nx + ny {
            h[(i, i)] = self.sign(i) * self.phi_derivative(2, z[i]);
        }
        h.view_mut((0, nx), (nx, ny)).copy_from(&self.a);
        h.view_mut((nx, 0), (ny, nx)).copy_from(&self.a.transpose());
        Some(h)
    }

    fn derivative_order(&self) -> usize {
        if self.quartic {
            usize::MAX
        } else {
            2
        }
    }

    fn gradient_dir_derivative(&self, k: usize, x: &Vector, y: &Vector, h: &Vector) -> Option<Vector> {
        let z = Self::stacked(x, y);
        Some(Vector::from_fn(z.len(), |i, _| {
            self.sign(i) * self.phi_derivative(k + 1, z[i]) * h[i].powi(k as i32)
        }))
    }

    fn gradient_dir_jacobian(&self, k: usize, x: &Vector, y: &Vector, h: &Vector) -> Option<Matrix> {
        let z = Self::stacked(x, y);
        let diag = Vector::from_fn(z.len(), |i, _| {
            self.sign(i) * self.phi_derivative(k + 1, z[i]) * k as f64 * h[i].powi(k as i32 - 1)
        });
        Some(Matrix::from_diagonal(&diag))
    }
}

fn validate(spec: &ProblemSpec) -> Result<()> {
    if spec.n == 0 {
        return Err(Error::Config("problem dimension must be positive".into()));
    }
    if matches!(spec.kind, ProblemKind::CubicReg | ProblemKind::QuarticReg) && !(spec.rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {}", spec.rho)));
    }
    if !(spec.domain_radius > 0.0) {
        return Err(Error::Config("domain_radius must be positive".into()));
    }
    if spec.n > linalg::MAX_DENSE_DIM {
        return Err(Error::TooLarge(spec.n));
    }
    Ok(())
}

fn coupling(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    match &spec.matrix {
        Some(rows) => {
            let m = matrix_from_rows(rows)?;
            if m.shape() != (spec.n, spec.n) {
                return Err(Error::Config(format!(
                    "matrix is {:?}, expected {}x{}",
                    m.shape(),
                    spec.n,
                    spec.n
                )));
            }
            Ok(m)
        }
        None => Ok(random_matrix(rng, spec.n, spec.n)),
    }
}

fn player_set(set: PlayerSet, n: usize) -> Result<ConstraintSet> {
    match set {
        PlayerSet::WholeSpace => Ok(ConstraintSet::whole_space(n)),
        PlayerSet::Ball { radius } => ConstraintSet::ball(Vector::zeros(n), radius),
        PlayerSet::Box { bound } => ConstraintSet::bounded_box(Vector::from_element(n, -bound), Vector::from_element(n, bound)),
    }
}

fn minmax_problem(
    spec: ProblemSpec,
    objective: Arc<dyn SaddleFunction>,
    set_x: ConstraintSet,
    set_y: ConstraintSet,
    geometry: BregmanGeometry,
    smoothness: SmoothnessSpec,
    known_solution: Option<Vector>,
) -> Result<Problem> {
    let minmax = MinMaxProblem {
        objective,
        set_x,
        set_y,
        smoothness: smoothness.clone(),
        known_solution: known_solution.clone(),
    };
    let field = Arc::new(gda_field(&minmax)?);
    Ok(Problem {
        spec,
        field,
        geometry,
        set: minmax.joint_set(),
        smoothness,
        known_solution,
        minmax: Some(minmax),
    })
}

/// Builds the problem described by `spec`; identical specs give
/// bit-identical problems.
pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let radius = spec.domain_radius;
    match spec.kind {
        ProblemKind::Bilinear => {
            let a = coupling(spec, &mut rng)?;
            let b = vector_or_zero(&spec.b, n, "b")?;
            let c = vector_or_zero(&spec.c, n, "c")?;
            let sets = spec.sets.unwrap_or(PlayerSet::WholeSpace);
            let svals = linalg::singular_values(&a)?;
            let smoothness = SmoothnessSpec {
                mu: *svals.last().unwrap_or(&0.0),
                ..SmoothnessSpec::default()
            }
            .with_lipschitz(1, svals[0])?
            .with_lipschitz(2, 0.0)?
            .with_lipschitz(3, 0.0)?;
            // first-order system: A y + b = 0, Aᵀx + c = 0
            let known = match sets {
                PlayerSet::WholeSpace => match (linalg::solve(&a, &(-&b)), linalg::solve(&a.transpose(), &(-&c))) {
                    (Ok(y), Ok(x)) => Some(MinMaxProblem::stack(&x, &y)),
                    _ => None,
                },
                _ if b.iter().chain(c.iter()).all(|v| *v == 0.0) => Some(Vector::zeros(2 * n)),
                _ => None,
            };
            minmax_problem(
                spec.clone(),
                Arc::new(Bilinear { a, b, c }),
                player_set(sets, n)?,
                player_set(sets, n)?,
                BregmanGeometry::SquaredEuclidean,
                smoothness,
                known,
            )
        }
        ProblemKind::CubicReg | ProblemKind::QuarticReg => {
            let quartic = spec.kind == ProblemKind::QuarticReg;
            if spec.b.is_some() || spec.c.is_some() || spec.sets.is_some() {
                return Err(Error::Config("regularized problems take no b, c or sets".into()));
            }
            let a = coupling(spec, &mut rng)?;
            let svals = linalg::singular_values(&a)?;
            let rho = spec.rho;
            let smoothness = if quartic {
                SmoothnessSpec::default()
                    .with_lipschitz(1, svals[0] + rho * radius * radius)?
                    .with_lipschitz(2, 2.0 * rho * radius)?
                    .with_lipschitz(3, 2.0 * rho)?
                    .with_radius(radius)
            } else {
                SmoothnessSpec::default()
                    .with_lipschitz(1, svals[0] + 2.0 * rho * radius)?
                    .with_lipschitz(2, 2.0 * rho)?
                    .with_radius(radius)
            };
            let smoothness = SmoothnessSpec {
                mu: *svals.last().unwrap_or(&0.0),
                ..smoothness
            };
            minmax_problem(
                spec.clone(),
                Arc::new(Regularized { a, rho, quartic }),
                ConstraintSet::whole_space(n),
                ConstraintSet::whole_space(n),
                BregmanGeometry::SquaredEuclidean,
                smoothness,
                Some(Vector::zeros(2 * n)),
            )
        }
        ProblemKind::MatrixGame => {
            if spec.b.is_some() || spec.c.is_some() || spec.sets.is_some() {
                return Err(Error::Config("matrix games take no b, c or sets".into()));
            }
            let a = coupling(spec, &mut rng)?;
            let smoothness = SmoothnessSpec::default()
                .with_lipschitz(1, linalg::singular_values(&a)?[0])?
                .with_lipschitz(2, 0.0)?;
            minmax_problem(
                spec.clone(),
                Arc::new(Bilinear {
                    a,
                    b: Vector::zeros(n),
                    c: Vector::zeros(n),
                }),
                ConstraintSet::simplex(n),
                ConstraintSet::simplex(n),
                BregmanGeometry::NegativeEntropy,
                smoothness,
                None,
            )
        }
        ProblemKind::MonotoneQuadratic => {
            if spec.sets.is_some() || spec.c.is_some() {
                return Err(Error::Config("monotone_quadratic takes only matrix and b".into()));
            }
            let m = match &spec.matrix {
                Some(rows) => {
                    let m = matrix_from_rows(rows)?;
                    if m.shape() != (n, n) {
                        return Err(Error::Config("matrix must be n x n".into()));
                    }
                    m
                }
                None => {
                    let g = random_matrix(&mut rng, n, n);
                    let psd = g.transpose() * &g / n as f64;
                    let k = random_matrix(&mut rng, n, n);
                    psd + (&k - k.transpose()) * 0.5
                }
            };
            let q = match &spec.b {
                Some(_) => vector_or_zero(&spec.b, n, "b")?,
                None => Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0)),
            };
            let svals = linalg::singular_values(&m)?;
            let smoothness = SmoothnessSpec {
                mu: *svals.last().unwrap_or(&0.0),
                ..SmoothnessSpec::default()
            }
            .with_lipschitz(1, svals[0])?
            .with_lipschitz(2, 0.0)?
            .with_lipschitz(3, 0.0)?;
            let known = linalg::solve(&m, &(-&q)).ok();
            Ok(Problem {
                spec: spec.clone(),
                field: Arc::new(LinearField::new(m, q)?),
                geometry: BregmanGeometry::SquaredEuclidean,
                set: ConstraintSet::whole_space(n),
                smoothness,
                known_solution: known,
                minmax: None,
            })
        }
    }
}
