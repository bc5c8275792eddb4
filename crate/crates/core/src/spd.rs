//! Bures-Wasserstein geometry of symmetric positive definite matrices.
//!
//! Centered Gaussians are identified with their covariance matrices. The
//! geometry is realized as the quotient of the invertible matrices `GL(d)` by
//! the right action of the orthogonal group: `π(A) = A Aᵀ` maps a fiber
//! representative `A` to its covariance, tangent vectors `X` with `XᵀA = AᵀX`
//! are horizontal, and `π` is a Riemannian submersion onto the
//! Bures-Wasserstein metric.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::linalg::{self, Mat};

/// Relative eigenvalue floor used to admit a matrix as positive definite.
pub const SPD_TOLERANCE: f64 = 1e-12;
/// Default relative tolerance of the horizontality test.
pub const HORIZONTAL_TOLERANCE: f64 = 1e-9;

/// A symmetric positive definite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Mat);

impl SpdMatrix {
    /// Validates symmetry and positive definiteness, then stores the
    /// symmetrized matrix.
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(GpcaError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GpcaError::Numeric("non-finite matrix entry".into()));
        }
        let asym = linalg::max_asymmetry(&m);
        if asym > 1e-10 * (1.0 + linalg::max_abs(&m)) {
            return Err(GpcaError::NotSymmetric { asymmetry: asym });
        }
        let s = linalg::sym(&m);
        let (values, _) = linalg::sym_eigen(&s);
        let largest = values.last().copied().unwrap_or(0.0);
        let tolerance = SPD_TOLERANCE * largest.abs().max(f64::MIN_POSITIVE);
        if !(values[0] > tolerance) {
            return Err(GpcaError::NotPositiveDefinite {
                eigenvalue: values[0],
                tolerance,
            });
        }
        Ok(SpdMatrix(s))
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(GpcaError::DimensionMismatch {
                expected: d * d,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix(Mat::identity(d, d))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let d = values.len();
        Self::new(Mat::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    /// Wraps a matrix already known to be SPD (symmetrizes it).
    pub(crate) fn from_trusted(m: Mat) -> Self {
        SpdMatrix(linalg::sym(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().iter().copied().collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigen(&self.0).0
    }
}

/// An invertible matrix `A`, a point of the fiber `π⁻¹(A Aᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberRepresentative(Mat);

impl FiberRepresentative {
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(GpcaError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let s = linalg::singular_values(&m);
        let smallest = *s.last().unwrap();
        if !(smallest > 1e-12 * s[0]) || !s[0].is_finite() {
            return Err(GpcaError::Singular { smallest });
        }
        Ok(FiberRepresentative(m))
    }

    pub(crate) fn from_trusted(m: Mat) -> Self {
        FiberRepresentative(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }
}

/// A special orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(Mat);

impl Rotation {
    pub fn new(m: Mat) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d {
            return Err(GpcaError::DimensionMismatch {
                expected: d,
                got: m.ncols(),
            });
        }
        let orth = (m.transpose() * &m - Mat::identity(d, d)).norm();
        if orth > 1e-10 {
            return Err(GpcaError::NotRotation(format!("‖QᵀQ − I‖ = {orth:.3e}")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(GpcaError::NotRotation(format!("det = {det}")));
        }
        Ok(Rotation(m))
    }

    pub fn identity(d: usize) -> Self {
        Rotation(Mat::identity(d, d))
    }

    /// Projects an approximately orthogonal matrix back onto `SO(d)`.
    pub fn nearest(m: &Mat) -> Self {
        Rotation(linalg::nearest_rotation(m))
    }

    /// Planar rotation by `theta` (d = 2).
    pub fn planar(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Rotation(Mat::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        Rotation(linalg::random_rotation(rng, d))
    }

    pub(crate) fn from_trusted(m: Mat) -> Self {
        Rotation(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }
}

/// A tangent vector to `GL(d)`; horizontality is checked against a base with
/// [`horizontal_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix(pub Mat);

impl TangentMatrix {
    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Spectral coordinates of a 2×2 covariance: `P_θ diag(a², b²) P_θᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoords {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

/// Cone coordinates of a 2×2 covariance: `[[x + y, z], [z, x − y]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCoords {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(GpcaError::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// The unique SPD square root.
pub fn spd_sqrt(s: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_trusted(linalg::sqrt_psd(s.matrix()))
}

/// Inverse of the SPD square root.
pub fn spd_inv_sqrt(s: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_trusted(linalg::sym_apply(s.matrix(), |x| 1.0 / x.sqrt()))
}

/// `tr(S1 + S2) − 2 tr((R S2 R)^{1/2})` with `R = S1^{1/2}` already computed.
pub(crate) fn bw_sq_with_root(s1: &Mat, root1: &Mat, s2: &Mat) -> f64 {
    let middle = linalg::sym(&(root1 * s2 * root1));
    let (values, _) = linalg::sym_eigen(&middle);
    let cross: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    (s1.trace() + s2.trace() - 2.0 * cross).max(0.0)
}

/// Squared Bures-Wasserstein distance.
pub fn bures_wasserstein_sq(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    check_dims(s1.dim(), s2.dim())?;
    let root = linalg::sqrt_psd(s1.matrix());
    Ok(bw_sq_with_root(s1.matrix(), &root, s2.matrix()))
}

/// Bures-Wasserstein distance.
pub fn bures_wasserstein(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    Ok(bures_wasserstein_sq(s1, s2)?.sqrt())
}

pub(crate) fn monge_with_roots(root1: &Mat, inv_root1: &Mat, s2: &Mat) -> Mat {
    let middle = linalg::sqrt_psd(&linalg::sym(&(root1 * s2 * root1)));
    linalg::sym(&(inv_root1 * middle * inv_root1))
}

/// Optimal transport (Monge) map from `N(0, S1)` to `N(0, S2)`:
/// `T = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}`.
pub fn monge_map(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(s1.dim(), s2.dim())?;
    let root = linalg::sqrt_psd(s1.matrix());
    let inv_root = linalg::sym_apply(s1.matrix(), |x| 1.0 / x.sqrt());
    Ok(SpdMatrix::from_trusted(monge_with_roots(&root, &inv_root, s2.matrix())))
}

/// `π(A) = A Aᵀ`.
pub fn fiber_project(a: &FiberRepresentative) -> SpdMatrix {
    SpdMatrix::from_trusted(a.matrix() * a.matrix().transpose())
}

/// Differential of the projection: `dπ_A(X) = X Aᵀ + A Xᵀ`.
pub fn dpi(a: &FiberRepresentative, x: &TangentMatrix) -> Result<Mat> {
    check_dims(a.dim(), x.0.nrows())?;
    let m = x.matrix() * a.matrix().transpose();
    Ok(linalg::sym(&(&m + m.transpose())))
}

/// Outcome of a horizontality test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalCheck {
    pub horizontal: bool,
    /// `‖XᵀA − AᵀX‖`.
    pub residual: f64,
    /// `residual / (‖X‖ ‖A‖)`, zero for a zero vector.
    pub relative: f64,
}

pub(crate) fn horizontality_residual(a: &Mat, x: &Mat) -> (f64, f64) {
    let m = x.transpose() * a;
    let residual = (&m - m.transpose()).norm();
    let scale = x.norm() * a.norm();
    let relative = if scale > 0.0 { residual / scale } else { 0.0 };
    (residual, relative)
}

/// Tests `XᵀA = AᵀX` with the given relative tolerance.
pub fn horizontal_check_with(a: &FiberRepresentative, x: &TangentMatrix, tol: f64) -> HorizontalCheck {
    let (residual, relative) = horizontality_residual(a.matrix(), x.matrix());
    HorizontalCheck {
        horizontal: residual <= tol * x.norm() * a.matrix().norm(),
        residual,
        relative,
    }
}

pub fn horizontal_check(a: &FiberRepresentative, x: &TangentMatrix) -> HorizontalCheck {
    horizontal_check_with(a, x, HORIZONTAL_TOLERANCE)
}

/// The unique horizontal `X = K A` with `dπ_A(X) = U`, found by solving
/// `K (A Aᵀ) + (A Aᵀ) K = U`.
pub fn horizontal_lift(a: &FiberRepresentative, u: &Mat) -> Result<TangentMatrix> {
    check_dims(a.dim(), u.nrows())?;
    let sigma = a.matrix() * a.matrix().transpose();
    let k = linalg::solve_sylvester_sym(&linalg::sym(&sigma), &linalg::sym(u))
        .ok_or_else(|| GpcaError::Numeric("Sylvester solve failed".into()))?;
    Ok(TangentMatrix(k * a.matrix()))
}

/// Orthogonal projection of an arbitrary matrix onto the horizontal space at
/// `A` (the subspace `{K A : K symmetric}`).
pub fn horizontal_projection(a: &FiberRepresentative, x: &Mat) -> Result<TangentMatrix> {
    // Minimizing ‖X − K A‖ over symmetric K gives K Σ + Σ K = X Aᵀ + A Xᵀ.
    let sigma = a.matrix() * a.matrix().transpose();
    let rhs = x * a.matrix().transpose();
    let rhs = &rhs + rhs.transpose();
    let k = linalg::solve_sylvester_sym(&linalg::sym(&sigma), &linalg::sym(&rhs))
        .ok_or_else(|| GpcaError::Numeric("Sylvester solve failed".into()))?;
    Ok(TangentMatrix(k * a.matrix()))
}

/// Point of the fiber over `S2` closest to `A1`: `A2 = T A1` with `T` the
/// Monge map from `π(A1)` to `S2`.
pub fn align(a1: &FiberRepresentative, s2: &SpdMatrix) -> Result<FiberRepresentative> {
    check_dims(a1.dim(), s2.dim())?;
    let t = monge_map(&fiber_project(a1), s2)?;
    Ok(FiberRepresentative::from_trusted(t.matrix() * a1.matrix()))
}

/// `Q* = S2^{-1/2} T S1^{1/2}`, the rotation minimizing `‖S1^{1/2} − S2^{1/2} Q‖`.
pub fn optimal_rotation(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<Rotation> {
    let t = monge_map(s1, s2)?;
    let q = spd_inv_sqrt(s2).matrix() * t.matrix() * spd_sqrt(s1).matrix();
    Ok(Rotation::nearest(&q))
}

/// Riemannian logarithm `Log_{S}(S') = (T − I) S + S (T − I)`.
pub fn bw_log(base: &SpdMatrix, s: &SpdMatrix) -> Result<Mat> {
    let t = monge_map(base, s)?;
    let d = base.dim();
    let shifted = t.matrix() - Mat::identity(d, d);
    let m = &shifted * base.matrix();
    Ok(linalg::sym(&(&m + m.transpose())))
}

/// Bures-Wasserstein metric `g_S(U, V) = ½ Σ_ij U'_ij V'_ij / (d_i + d_j)`
/// evaluated in an eigenbasis of `S`.
pub fn bw_metric_inner(base: &SpdMatrix, u: &Mat, v: &Mat) -> Result<f64> {
    check_dims(base.dim(), u.nrows())?;
    check_dims(base.dim(), v.nrows())?;
    let (values, vectors) = linalg::sym_eigen(base.matrix());
    let ur = vectors.transpose() * linalg::sym(u) * &vectors;
    let vr = vectors.transpose() * linalg::sym(v) * &vectors;
    let d = base.dim();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            total += ur[(i, j)] * vr[(i, j)] / (values[i] + values[j]);
        }
    }
    Ok(0.5 * total)
}

pub fn bw_metric_norm(base: &SpdMatrix, u: &Mat) -> Result<f64> {
    Ok(bw_metric_inner(base, u, u)?.max(0.0).sqrt())
}

pub fn spectral_to_spd(c: SpectralCoords) -> Result<SpdMatrix> {
    if !(c.a > 0.0 && c.b > 0.0) {
        return Err(GpcaError::InvalidArgument(format!(
            "spectral coordinates need a, b > 0 (got a = {}, b = {})",
            c.a, c.b
        )));
    }
    let p = Rotation::planar(c.theta).into_matrix();
    let d = Mat::from_row_slice(2, 2, &[c.a * c.a, 0.0, 0.0, c.b * c.b]);
    SpdMatrix::new(linalg::sym(&(&p * d * p.transpose())))
}

/// Inverse of [`spectral_to_spd`] on the canonical branch `a ≥ b`,
/// `θ ∈ [0, π)`; isotropic matrices report `θ = 0`.
pub fn spd_to_spectral(s: &SpdMatrix) -> Result<SpectralCoords> {
    if s.dim() != 2 {
        return Err(GpcaError::UnsupportedDimension(s.dim()));
    }
    let m = s.matrix();
    let (p, q, r) = (m[(0, 0)], m[(1, 1)], m[(0, 1)]);
    let half_trace = 0.5 * (p + q);
    let radius = (0.25 * (p - q) * (p - q) + r * r).sqrt();
    let big = half_trace + radius;
    let small = (half_trace - radius).max(0.0);
    let mut theta = if radius <= 1e-15 * half_trace.abs() {
        0.0
    } else {
        0.5 * (2.0 * r).atan2(p - q)
    };
    theta = theta.rem_euclid(std::f64::consts::PI);
    if theta >= std::f64::consts::PI {
        theta = 0.0;
    }
    Ok(SpectralCoords {
        a: big.sqrt(),
        b: small.sqrt(),
        theta,
    })
}

pub fn cone_to_spd(c: ConeCoords) -> Result<SpdMatrix> {
    if !(c.x > 0.0 && c.x * c.x > c.y * c.y + c.z * c.z) {
        return Err(GpcaError::InvalidArgument(format!(
            "cone point ({}, {}, {}) does not map to an SPD matrix",
            c.x, c.y, c.z
        )));
    }
    SpdMatrix::new(Mat::from_row_slice(2, 2, &[c.x + c.y, c.z, c.z, c.x - c.y]))
}

pub fn spd_to_cone(s: &SpdMatrix) -> Result<ConeCoords> {
    if s.dim() != 2 {
        return Err(GpcaError::UnsupportedDimension(s.dim()));
    }
    let m = s.matrix();
    Ok(ConeCoords {
        x: 0.5 * (m[(0, 0)] + m[(1, 1)]),
        y: 0.5 * (m[(0, 0)] - m[(1, 1)]),
        z: m[(0, 1)],
    })
}

/// Random SPD matrix `Q diag(exp(u)) Qᵀ` with `u` uniform in
/// `[-log_spread, log_spread]` and Haar `Q`.
pub fn sample_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, log_spread: f64) -> SpdMatrix {
    let q = linalg::random_rotation(rng, d);
    let diag = Mat::from_fn(d, d, |i, j| {
        if i == j {
            rng.random_range(-log_spread..=log_spread).exp()
        } else {
            0.0
        }
    });
    SpdMatrix::from_trusted(&q * diag * q.transpose())
}
