//! Monotone operators, gradient descent-ascent fields and their Taylor models.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{Matrix, Vector};

/// Relative step of the central-difference fallbacks.
pub const FD_STEP: f64 = 1e-5;

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// An operator `F: Rⁿ → Rⁿ` together with whatever derivatives it can supply.
///
/// Only `dim` and `eval` are required; the Jacobian falls back to central
/// differences and second directional derivatives to differences of the
/// Jacobian. Implementations must be pure so that runs are reproducible.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, z: &Vector) -> Vector;

    fn jacobian(&self, z: &Vector) -> Matrix {
        finite_difference_jacobian(self, z)
    }

    /// Highest `k` for which `dir_derivative(k, ..)` is available.
    fn max_order(&self) -> usize {
        1
    }

    /// `∇ᵏF(u)[h]ᵏ`.
    fn dir_derivative(&self, k: usize, u: &Vector, h: &Vector) -> Result<Vector> {
        fd_dir_derivative(self, k, u, h)
    }

    /// Jacobian with respect to `h` of `h ↦ ∇ᵏF(u)[h]ᵏ`, that is
    /// `k·∇ᵏF(u)[h]ᵏ⁻¹[·]`. Used by the Newton solver of the implicit step.
    fn dir_derivative_jacobian(&self, k: usize, u: &Vector, h: &Vector) -> Result<Matrix> {
        fd_dir_derivative_jacobian(self, k, u, h)
    }
}

fn fd_step(z: &Vector) -> f64 {
    FD_STEP * (1.0 + z.norm())
}

/// Central-difference Jacobian with step `1e-5·(1+‖z‖)`.
pub fn finite_difference_jacobian<F: VectorField + ?Sized>(field: &F, z: &Vector) -> Matrix {
    let n = z.len();
    let h = fd_step(z);
    let mut jac = Matrix::zeros(field.dim(), n);
    for j in 0..n {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[j] += h;
        minus[j] -= h;
        let col = (field.eval(&plus) - field.eval(&minus)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Derivative of `J(u + εh)` at `ε = 0`, i.e. the matrix `∇²F(u)[h, ·]`.
fn jacobian_derivative<F: VectorField + ?Sized>(field: &F, u: &Vector, h: &Vector) -> Matrix {
    let hn = h.norm();
    if hn == 0.0 {
        return Matrix::zeros(field.dim(), u.len());
    }
    let eps = fd_step(u) / hn;
    (field.jacobian(&(u + h * eps)) - field.jacobian(&(u - h * eps))) / (2.0 * eps)
}

/// Fallback for [`VectorField::dir_derivative`].
pub fn fd_dir_derivative<F: VectorField + ?Sized>(
    field: &F,
    k: usize,
    u: &Vector,
    h: &Vector,
) -> Result<Vector> {
    if k > field.max_order() {
        return Err(Error::UnsupportedOrder {
            requested: k,
            max: field.max_order(),
        });
    }
    match k {
        0 => Ok(field.eval(u)),
        1 => Ok(field.jacobian(u) * h),
        2 => Ok(jacobian_derivative(field, u, h) * h),
        _ => Err(Error::UnsupportedOrder {
            requested: k,
            max: 2,
        }),
    }
}

/// Fallback for [`VectorField::dir_derivative_jacobian`].
pub fn fd_dir_derivative_jacobian<F: VectorField + ?Sized>(
    field: &F,
    k: usize,
    u: &Vector,
    h: &Vector,
) -> Result<Matrix> {
    if k > field.max_order() {
        return Err(Error::UnsupportedOrder {
            requested: k,
            max: field.max_order(),
        });
    }
    let n = u.len();
    match k {
        0 => Ok(Matrix::zeros(field.dim(), n)),
        1 => Ok(field.jacobian(u)),
        2 => Ok(jacobian_derivative(field, u, h) * 2.0),
        _ => {
            let step = fd_step(h);
            let mut out = Matrix::zeros(field.dim(), n);
            for j in 0..n {
                let mut plus = h.clone();
                let mut minus = h.clone();
                plus[j] += step;
                minus[j] -= step;
                let col = (field.dir_derivative(k, u, &plus)? - field.dir_derivative(k, u, &minus)?)
                    / (2.0 * step);
                out.set_column(j, &col);
            }
            Ok(out)
        }
    }
}

/// `T_k(v; u) = Σ_{i=0}^{k} (1/i!) ∇ⁱF(u)[v−u]ⁱ`.
pub fn taylor_eval<F: VectorField + ?Sized>(field: &F, u: &Vector, v: &Vector, k: usize) -> Result<Vector> {
    if k > field.max_order() {
        return Err(Error::UnsupportedOrder {
            requested: k,
            max: field.max_order(),
        });
    }
    check_dim(field.dim(), u)?;
    check_dim(field.dim(), v)?;
    let h = v - u;
    let mut acc = field.eval(u);
    for i in 1..=k {
        acc += field.dir_derivative(i, u, &h)? / factorial(i);
    }
    Ok(acc)
}

pub(crate) fn check_dim(expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Outcome of [`check_monotone`].
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// Smallest `⟨F(u)−F(v), u−v⟩` seen.
    pub min_inner: f64,
    /// Pair attaining `min_inner`.
    pub worst: Option<(Vector, Vector)>,
    pub samples: usize,
    pub monotone: bool,
}

/// Samples `⟨F(u)−F(v), u−v⟩` over pairs drawn from `sampler`.
pub fn check_monotone<F, S>(field: &F, mut sampler: S, samples: usize, tol: f64) -> MonotonicityReport
where
    F: VectorField + ?Sized,
    S: FnMut() -> (Vector, Vector),
{
    let mut min_inner = f64::INFINITY;
    let mut worst = None;
    for _ in 0..samples {
        let (u, v) = sampler();
        let inner = (field.eval(&u) - field.eval(&v)).dot(&(&u - &v));
        if inner < min_inner {
            min_inner = inner;
            worst = Some((u, v));
        }
    }
    MonotonicityReport {
        min_inner,
        worst,
        samples,
        monotone: samples == 0 || min_inner >= -tol,
    }
}

/// Declared smoothness constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSpec {
    /// `p ↦ L_p`; absent orders are unknown.
    pub lipschitz: BTreeMap<usize, f64>,
    /// Lower bound on `σ_min(∇F)` along trajectories.
    pub mu: f64,
    /// Radius within which the constants hold (`∞` for global constants).
    pub domain_radius: f64,
}

impl Default for SmoothnessSpec {
    fn default() -> Self {
        Self {
            lipschitz: BTreeMap::new(),
            mu: 0.0,
            domain_radius: f64::INFINITY,
        }
    }
}

impl SmoothnessSpec {
    pub fn with_lipschitz(mut self, order: usize, value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::Config(format!("L_{order} must be nonnegative, got {value}")));
        }
        self.lipschitz.insert(order, value);
        Ok(self)
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.domain_radius = radius;
        self
    }

    pub fn lipschitz(&self, order: usize) -> Option<f64> {
        self.lipschitz.get(&order).copied()
    }
}

/// A linear-plus-constant field `F(z) = Mz + q`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl LinearField {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Config("linear field needs a square matrix".into()));
        }
        check_dim(matrix.nrows(), &offset)?;
        Ok(Self { matrix, offset })
    }

    pub fn homogeneous(matrix: Matrix) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, Vector::zeros(n))
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, z: &Vector) -> Vector {
        &self.matrix * z + &self.offset
    }

    fn jacobian(&self, _z: &Vector) -> Matrix {
        self.matrix.clone()
    }

    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn dir_derivative(&self, k: usize, u: &Vector, h: &Vector) -> Result<Vector> {
        Ok(match k {
            0 => self.eval(u),
            1 => &self.matrix * h,
            _ => Vector::zeros(self.dim()),
        })
    }

    fn dir_derivative_jacobian(&self, k: usize, _u: &Vector, _h: &Vector) -> Result<Matrix> {
        let n = self.dim();
        Ok(match k {
            1 => self.matrix.clone(),
            _ => Matrix::zeros(n, n),
        })
    }
}

type EvalFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type DirFn = dyn Fn(usize, &Vector, &Vector) -> Option<Vector> + Send + Sync;
type DirJacFn = dyn Fn(usize, &Vector, &Vector) -> Option<Matrix> + Send + Sync;

/// A field assembled from closures; handy for one-off operators.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacFn>>,
    dir: Option<Arc<DirFn>>,
    dir_jac: Option<Arc<DirJacFn>>,
    max_order: usize,
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl FnField {
    pub fn new(dim: usize, eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            dir: None,
            dir_jac: None,
            max_order: 1,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Supplies `∇ᵏF(u)[h]ᵏ` for `2 ≤ k ≤ max_order`; `None` defers to finite differences.
    pub fn with_dir_derivative(
        mut self,
        max_order: usize,
        dir: impl Fn(usize, &Vector, &Vector) -> Option<Vector> + Send + Sync + 'static,
    ) -> Self {
        self.max_order = max_order;
        self.dir = Some(Arc::new(dir));
        self
    }

    pub fn with_dir_derivative_jacobian(
        mut self,
        dir_jac: impl Fn(usize, &Vector, &Vector) -> Option<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.dir_jac = Some(Arc::new(dir_jac));
        self
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &Vector) -> Vector {
        (self.eval)(z)
    }

    fn jacobian(&self, z: &Vector) -> Matrix {
        match &self.jacobian {
            Some(j) => j(z),
            None => finite_difference_jacobian(self, z),
        }
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn dir_derivative(&self, k: usize, u: &Vector, h: &Vector) -> Result<Vector> {
        if k >= 2 && k <= self.max_order {
            if let Some(v) = self.dir.as_ref().and_then(|d| d(k, u, h)) {
                return Ok(v);
            }
        }
        fd_dir_derivative(self, k, u, h)
    }

    fn dir_derivative_jacobian(&self, k: usize, u: &Vector, h: &Vector) -> Result<Matrix> {
        if k >= 2 && k <= self.max_order {
            if let Some(m) = self.dir_jac.as_ref().and_then(|d| d(k, u, h)) {
                return Ok(m);
            }
        }
        fd_dir_derivative_jacobian(self, k, u, h)
    }
}

/// A convex-concave objective `g(x, y)`.
///
/// Derivative hooks refer to the stacked gradient `G(x,y) = (∇ₓg, ∇ᵧg)`;
/// the descent-ascent field flips the sign of the `y` block.
pub trait SaddleFunction: Send + Sync + fmt::Debug {
    /// `(dim x, dim y)`.
    fn dims(&self) -> (usize, usize);

    fn value(&self, x: &Vector, y: &Vector) -> f64;

    fn grad_x(&self, x: &Vector, y: &Vector) -> Vector;

    fn grad_y(&self, x: &Vector, y: &Vector) -> Vector;

    /// Full Hessian of `g` in stacked coordinates, if available.
    fn hessian(&self, _x: &Vector, _y: &Vector) -> Option<Matrix> {
        None
    }

    /// Highest `k` such that `∇ᵏG` is available through [`Self::gradient_dir_derivative`].
    fn derivative_order(&self) -> usize {
        1
    }

    /// `∇ᵏG(x,y)[h]ᵏ` for `k ≥ 2`, `h` in stacked coordinates.
    fn gradient_dir_derivative(&self, _k: usize, _x: &Vector, _y: &Vector, _h: &Vector) -> Option<Vector> {
        None
    }

    /// Jacobian in `h` of `h ↦ ∇ᵏG(x,y)[h]ᵏ` for `k ≥ 2`.
    fn gradient_dir_jacobian(&self, _k: usize, _x: &Vector, _y: &Vector, _h: &Vector) -> Option<Matrix> {
        None
    }

    /// `argmax_{ŷ ∈ set_y} g(x, ŷ)` in closed form.
    fn best_response_y(&self, _x: &Vector, _set_y: &ConstraintSet) -> Option<Vector> {
        None
    }

    /// `argmin_{x̂ ∈ set_x} g(x̂, y)` in closed form.
    fn best_response_x(&self, _y: &Vector, _set_x: &ConstraintSet) -> Option<Vector> {
        None
    }
}

/// `min_x max_y g(x, y)` over `set_x × set_y`.
#[derive(Debug, Clone)]
pub struct MinMaxProblem {
    pub objective: Arc<dyn SaddleFunction>,
    pub set_x: ConstraintSet,
    pub set_y: ConstraintSet,
    pub smoothness: SmoothnessSpec,
    /// Saddle point in stacked coordinates `(x*, y*)`.
    pub known_solution: Option<Vector>,
}

impl MinMaxProblem {
    pub fn dims(&self) -> (usize, usize) {
        self.objective.dims()
    }

    pub fn split(&self, z: &Vector) -> (Vector, Vector) {
        let (nx, ny) = self.dims();
        (z.rows(0, nx).into_owned(), z.rows(nx, ny).into_owned())
    }

    pub fn stack(x: &Vector, y: &Vector) -> Vector {
        Vector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
    }

    /// The joint feasible set `set_x × set_y`.
    pub fn joint_set(&self) -> ConstraintSet {
        ConstraintSet::Product(vec![self.set_x.clone(), self.set_y.clone()])
    }
}

/// The descent-ascent field `F(x,y) = (∇ₓg, −∇ᵧg)` of a [`MinMaxProblem`].
#[derive(Debug, Clone)]
pub struct GdaField {
    objective: Arc<dyn SaddleFunction>,
    nx: usize,
    ny: usize,
}

/// Builds the descent-ascent field, checking the objective against its sets.
pub fn gda_field(problem: &MinMaxProblem) -> Result<GdaField> {
    let (nx, ny) = problem.dims();
    if problem.set_x.dim() != nx || problem.set_y.dim() != ny {
        return Err(Error::Config(format!(
            "objective has dims ({nx}, {ny}) but sets have dims ({}, {})",
            problem.set_x.dim(),
            problem.set_y.dim()
        )));
    }
    if nx + ny == 0 {
        return Err(Error::Config("empty problem".into()));
    }
    Ok(GdaField {
        objective: problem.objective.clone(),
        nx,
        ny,
    })
}

impl GdaField {
    fn split(&self, z: &Vector) -> (Vector, Vector) {
        (z.rows(0, self.nx).into_owned(), z.rows(self.nx, self.ny).into_owned())
    }

    fn flip_vec(&self, mut v: Vector) -> Vector {
        v.rows_mut(self.nx, self.ny).neg_mut();
        v
    }

    fn flip_rows(&self, mut m: Matrix) -> Matrix {
        m.rows_mut(self.nx, self.ny).neg_mut();
        m
    }
}

impl VectorField for GdaField {
    fn dim(&self) -> usize {
        self.nx + self.ny
    }

    fn eval(&self, z: &Vector) -> Vector {
        let (x, y) = self.split(z);
        let gx = self.objective.grad_x(&x, &y);
        let gy = self.objective.grad_y(&x, &y);
        Vector::from_iterator(self.dim(), gx.iter().copied().chain(gy.iter().map(|v| -v)))
    }

    fn jacobian(&self, z: &Vector) -> Matrix {
        let (x, y) = self.split(z);
        match self.objective.hessian(&x, &y) {
            Some(h) => self.flip_rows(h),
            None => finite_difference_jacobian(self, z),
        }
    }

    fn max_order(&self) -> usize {
        self.objective.derivative_order().max(1)
    }

    fn dir_derivative(&self, k: usize, u: &Vector, h: &Vector) -> Result<Vector> {
        if k >= 2 && k <= self.max_order() {
            let (x, y) = self.split(u);
            if let Some(v) = self.objective.gradient_dir_derivative(k, &x, &y, h) {
                return Ok(self.flip_vec(v));
            }
        }
        fd_dir_derivative(self, k, u, h)
    }

    fn dir_derivative_jacobian(&self, k: usize, u: &Vector, h: &Vector) -> Result<Matrix> {
        if k >= 2 && k <= self.max_order() {
            let (x, y) = self.split(u);
            if let Some(m) = self.objective.gradient_dir_jacobian(k, &x, &y, h) {
                return Ok(self.flip_rows(m));
            }
        }
        fd_dir_derivative_jacobian(self, k, u, h)
    }
}
