//! First-order optimization on the special orthogonal group `SO(d)` with the
//! metric induced by the Frobenius inner product.

use crate::error::{GpcaError, Result};
use crate::linalg::{self, Mat};
use crate::spd::Rotation;

/// A skew-symmetric matrix: tangent vectors of `SO(d)` at the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix(Mat);

impl SkewMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        let err = (&m + m.transpose()).norm();
        if err > 1e-12 * (1.0 + m.norm()) {
            return Err(GpcaError::InvalidArgument(format!(
                "matrix is not skew (‖M + Mᵀ‖ = {err:.3e})"
            )));
        }
        Ok(SkewMatrix(linalg::skew(&m)))
    }

    /// Skew part of an arbitrary square matrix.
    pub fn skew_part(m: &Mat) -> Self {
        SkewMatrix(linalg::skew(m))
    }

    pub fn zeros(d: usize) -> Self {
        SkewMatrix(Mat::zeros(d, d))
    }

    /// `[[0, −θ], [θ, 0]]`.
    pub fn planar(theta: f64) -> Self {
        SkewMatrix(Mat::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Matrix exponential of a skew-symmetric matrix.
pub fn expm_skew(v: &Mat) -> Mat {
    let d = v.nrows();
    match d {
        0 => Mat::zeros(0, 0),
        1 => Mat::identity(1, 1),
        2 => {
            let theta = 0.5 * (v[(1, 0)] - v[(0, 1)]);
            let (s, c) = theta.sin_cos();
            Mat::from_row_slice(2, 2, &[c, -s, s, c])
        }
        3 => {
            // Rodrigues
            let w = [v[(2, 1)], v[(0, 2)], v[(1, 0)]];
            let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            let k = linalg::skew(v);
            let (a, b) = if theta < 1e-8 {
                (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
            } else {
                (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
            };
            Mat::identity(3, 3) + &k * a + &k * &k * b
        }
        _ => expm_scaling_squaring(v),
    }
}

fn expm_scaling_squaring(v: &Mat) -> Mat {
    let d = v.nrows();
    let norm = v.norm();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = v * scale;
    let mut term = Mat::identity(d, d);
    let mut sum = Mat::identity(d, d);
    for k in 1..=18 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exponential map of `SO(d)` at `Q` along the left-translated tangent `Q V`:
/// `Q · expm(V)`.
pub fn so_exp(q: &Rotation, v: &SkewMatrix) -> Rotation {
    Rotation::from_trusted(q.matrix() * expm_skew(v.matrix()))
}

/// An objective on `SO(d)`, optionally with an analytic Euclidean gradient.
pub trait RotationObjective {
    fn value(&self, q: &Mat) -> f64;

    /// Euclidean gradient in the ambient `ℝ^{d×d}`; `None` selects central
    /// finite differences.
    fn euclidean_gradient(&self, _q: &Mat) -> Option<Mat> {
        None
    }
}

/// Wraps a closure as a derivative-free objective.
pub struct FnObjective<F: Fn(&Mat) -> f64>(pub F);

impl<F: Fn(&Mat) -> f64> RotationObjective for FnObjective<F> {
    fn value(&self, q: &Mat) -> f64 {
        (self.0)(q)
    }
}

/// `f(Q) = ‖M − C Q‖²`.
#[derive(Debug, Clone)]
pub struct ProcrustesObjective {
    pub target: Mat,
    pub factor: Mat,
}

impl RotationObjective for ProcrustesObjective {
    fn value(&self, q: &Mat) -> f64 {
        (&self.target - &self.factor * q).norm_squared()
    }

    fn euclidean_gradient(&self, q: &Mat) -> Option<Mat> {
        let ct = self.factor.transpose();
        Some((&ct * &self.factor * q - &ct * &self.target) * 2.0)
    }
}

pub const FD_STEP: f64 = 1e-6;

fn finite_difference_gradient<O: RotationObjective + ?Sized>(objective: &O, q: &Mat) -> Mat {
    let (r, c) = q.shape();
    let mut g = Mat::zeros(r, c);
    let mut probe = q.clone();
    for i in 0..r {
        for j in 0..c {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + FD_STEP;
            let up = objective.value(&probe);
            probe[(i, j)] = orig - FD_STEP;
            let down = objective.value(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * FD_STEP);
        }
    }
    g
}

/// Riemannian gradient expressed in the Lie algebra: `V = skew(Qᵀ G)`, so the
/// steepest-descent curve is `Q expm(−αV)`.
pub fn riemannian_grad<O: RotationObjective + ?Sized>(objective: &O, q: &Rotation) -> SkewMatrix {
    let g = objective
        .euclidean_gradient(q.matrix())
        .unwrap_or_else(|| finite_difference_gradient(objective, q.matrix()));
    SkewMatrix::skew_part(&(q.matrix().transpose() * g))
}

/// Settings of [`rotation_descent`]. The Armijo constants are reported with
/// every run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RotationDescentConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub sufficient_decrease: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
}

impl Default for RotationDescentConfig {
    fn default() -> Self {
        RotationDescentConfig {
            max_iters: 500,
            grad_tol: 1e-8,
            initial_step: 1.0,
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            max_halvings: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub rotation: Rotation,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// The line search failed to find sufficient decrease.
    pub stalled: bool,
    /// Objective value after every accepted iterate, starting with `Q0`.
    pub trace: Vec<f64>,
}

/// Riemannian gradient descent with Armijo backtracking along `so_exp`.
pub fn rotation_descent<O: RotationObjective + ?Sized>(
    objective: &O,
    start: &Rotation,
    config: &RotationDescentConfig,
) -> DescentOutcome {
    let mut q = start.clone();
    let mut value = objective.value(q.matrix());
    let mut trace = vec![value];
    let mut stalled = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let v = riemannian_grad(objective, &q);
        grad_norm = v.norm();
        if !(grad_norm >= config.grad_tol) {
            break;
        }
        let slope = grad_norm * grad_norm;
        let mut step = config.initial_step;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let candidate = so_exp(&q, &SkewMatrix(v.matrix() * -step));
            let cv = objective.value(candidate.matrix());
            if cv <= value - config.sufficient_decrease * step * slope {
                accepted = Some((candidate, cv));
                break;
            }
            step *= config.backtrack;
        }
        iterations += 1;
        match accepted {
            Some((candidate, cv)) => {
                q = candidate;
                value = cv;
                trace.push(value);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    let polished = Rotation::nearest(q.matrix());
    let polished_value = objective.value(polished.matrix());
    if polished_value <= value {
        q = polished;
        value = polished_value;
    }
    DescentOutcome {
        rotation: q,
        value,
        iterations,
        grad_norm,
        stalled,
        trace,
    }
}

/// Minimizer of `‖M − C Q‖` over `SO(d)` from the SVD of `Cᵀ M`, with the
/// sign of the last singular direction flipped when needed. `M` and `C` may
/// be tall (`m × d`).
pub fn procrustes_init(target: &Mat, factor: &Mat) -> Result<Rotation> {
    if target.shape() != factor.shape() {
        return Err(GpcaError::DimensionMismatch {
            expected: factor.nrows(),
            got: target.nrows(),
        });
    }
    let s = linalg::singular_values(factor);
    let smallest = s.last().copied().unwrap_or(0.0);
    if s.len() < factor.ncols() || !(smallest > 1e-12 * s[0]) {
        return Err(GpcaError::Singular { smallest });
    }
    let cross = factor.transpose() * target;
    Ok(Rotation::from_trusted(procrustes_from_cross(&cross)))
}

/// `argmax_{Q ∈ SO(d)} tr(Qᵀ M)`.
pub(crate) fn procrustes_from_cross(cross: &Mat) -> Mat {
    linalg::nearest_rotation(cross)
}
