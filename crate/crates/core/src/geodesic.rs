//! Bures-Wasserstein geodesics as projections of horizontal line segments.
//!
//! A geodesic is `Σ(t) = π(A + tX)` for a base `A ∈ GL(d)` and a unit
//! horizontal direction `X`. The line leaves `GL(d)` where `A + tX` becomes
//! singular, which happens at `t = −1/λ` for the eigenvalues `λ` of the
//! symmetric matrix `X A⁻¹`; the admissible interval stops a margin `ε`
//! short of those times.

use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::linalg::{self, Mat};
use crate::spd::{horizontality_residual, FiberRepresentative, Rotation, SpdMatrix, TangentMatrix};

/// Default interval margin.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Eigenvalues of `XA⁻¹` smaller than this in magnitude count as zero.
pub const EIGEN_ZERO: f64 = 1e-12;
const UNIT_TOLERANCE: f64 = 1e-10;
const HORIZONTAL_TOLERANCE: f64 = 1e-9;

/// Extreme eigenvalues of `X A⁻¹` (symmetrized; real for horizontal `X`).
pub fn direction_spectrum(a: &Mat, x: &Mat) -> Result<(f64, f64)> {
    let inv = a.clone().try_inverse().ok_or(GpcaError::Singular { smallest: 0.0 })?;
    let m = x * inv;
    let (values, _) = linalg::sym_eigen(&linalg::sym(&m));
    Ok((values[0], *values.last().unwrap()))
}

pub(crate) fn interval_from_spectrum(lambda_min: f64, lambda_max: f64, epsilon: f64) -> Result<(f64, f64)> {
    let positive = lambda_max > EIGEN_ZERO;
    let negative = lambda_min < -EIGEN_ZERO;
    if !positive && !negative {
        return Err(GpcaError::DegenerateDirection);
    }
    let t_min = if positive {
        -1.0 / lambda_max + epsilon
    } else {
        f64::NEG_INFINITY
    };
    let t_max = if negative {
        -1.0 / lambda_min - epsilon
    } else {
        f64::INFINITY
    };
    if t_min > t_max {
        return Err(GpcaError::InvalidArgument(format!(
            "margin {epsilon} leaves an empty interval [{t_min}, {t_max}]"
        )));
    }
    Ok((t_min, t_max))
}

pub(crate) fn interval_unchecked(a: &Mat, x: &Mat, epsilon: f64) -> Result<(f64, f64)> {
    let (lo, hi) = direction_spectrum(a, x)?;
    interval_from_spectrum(lo, hi, epsilon)
}

/// Admissible time interval `[t_min, t_max]` of the line `A + tX`.
///
/// With `λ_min ≤ λ_max` the extreme eigenvalues of `XA⁻¹`, the lower end is
/// `−1/λ_max + ε` when `λ_max > 0` (else `−∞`) and the upper end is
/// `−1/λ_min − ε` when `λ_min < 0` (else `+∞`).
pub fn admissible_interval(a: &FiberRepresentative, x: &TangentMatrix, epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(GpcaError::InvalidArgument("epsilon must be positive".into()));
    }
    let (_, relative) = horizontality_residual(a.matrix(), x.matrix());
    if relative > HORIZONTAL_TOLERANCE {
        return Err(GpcaError::NotHorizontal { residual: relative });
    }
    interval_unchecked(a.matrix(), x.matrix(), epsilon)
}

/// A Bures-Wasserstein geodesic segment `t ↦ π(A + tX)`, `t ∈ [t_min, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SegmentRecord", try_from = "SegmentRecord")]
pub struct GeodesicSegment {
    base: Mat,
    direction: Mat,
    t_min: f64,
    t_max: f64,
    epsilon: f64,
}

impl GeodesicSegment {
    /// Builds a segment from a base and a unit horizontal direction.
    pub fn new(base: &FiberRepresentative, direction: &TangentMatrix, epsilon: f64) -> Result<Self> {
        if direction.matrix().nrows() != base.dim() {
            return Err(GpcaError::DimensionMismatch {
                expected: base.dim(),
                got: direction.matrix().nrows(),
            });
        }
        let n = direction.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GpcaError::InvalidArgument(format!(
                "direction must have unit norm (got {n})"
            )));
        }
        let (t_min, t_max) = admissible_interval(base, direction, epsilon)?;
        Ok(GeodesicSegment {
            base: base.matrix().clone(),
            direction: direction.matrix().clone(),
            t_min,
            t_max,
            epsilon,
        })
    }

    /// Internal constructor for already validated parts; normalizes `X`.
    pub(crate) fn from_parts(base: Mat, direction: Mat, epsilon: f64) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) {
            return Err(GpcaError::DegenerateDirection);
        }
        let direction = direction / n;
        let (t_min, t_max) = interval_unchecked(&base, &direction, epsilon)?;
        Ok(GeodesicSegment {
            base,
            direction,
            t_min,
            t_max,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn base(&self) -> &Mat {
        &self.base
    }

    pub fn direction(&self) -> &Mat {
        &self.direction
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// `min(max(t, t_min), t_max)`.
    pub fn clip_time(&self, t: f64) -> f64 {
        t.max(self.t_min).min(self.t_max)
    }

    /// The lifted point `A + tX` (no interval check).
    pub fn lifted_point(&self, t: f64) -> Mat {
        &self.base + &self.direction * t
    }

    /// `Σ(t) = (A + tX)(A + tX)ᵀ`.
    pub fn eval(&self, t: f64) -> Result<SpdMatrix> {
        if !self.contains(t) {
            return Err(GpcaError::OutOfInterval {
                t,
                t_min: self.t_min,
                t_max: self.t_max,
            });
        }
        let p = self.lifted_point(t);
        Ok(SpdMatrix::from_trusted(&p * p.transpose()))
    }

    /// Unclipped orthogonal projection parameter of `B` onto the line.
    pub fn projection_time(&self, b: &Mat) -> f64 {
        linalg::inner(&(b - &self.base), &self.direction) / self.direction.norm_squared()
    }

    /// Squared distance from `B` to the clipped projection point.
    pub fn residual_to(&self, b: &Mat) -> f64 {
        let t = self.clip_time(self.projection_time(b));
        (self.lifted_point(t) - b).norm_squared()
    }

    /// Residual of the representative `S^{1/2} Q`.
    pub fn residual(&self, s: &SpdMatrix, q: &Rotation) -> f64 {
        let root = linalg::sqrt_psd(s.matrix());
        self.residual_to(&(root * q.matrix()))
    }

    /// Same line, reversed orientation: `(A, −X)` with the mirrored interval.
    pub fn reversed(&self) -> Self {
        GeodesicSegment {
            base: self.base.clone(),
            direction: -&self.direction,
            t_min: -self.t_max,
            t_max: -self.t_min,
            epsilon: self.epsilon,
        }
    }

    /// Same line with base moved to `A + sX`; times shift by `−s`.
    pub fn rebased(&self, s: f64) -> Result<Self> {
        Self::from_parts(self.lifted_point(s), self.direction.clone(), self.epsilon)
    }

    /// Right action of a rotation: `(A R, X R)` projects to the same curve.
    pub fn rotated(&self, r: &Mat) -> Self {
        GeodesicSegment {
            base: &self.base * r,
            direction: &self.direction * r,
            t_min: self.t_min,
            t_max: self.t_max,
            epsilon: self.epsilon,
        }
    }

    /// Finite window inside the interval: infinite ends are replaced by
    /// `fallback` (a time on that side).
    pub fn finite_window(&self, lo_fallback: f64, hi_fallback: f64) -> (f64, f64) {
        let lo = if self.t_min.is_finite() {
            self.t_min
        } else {
            lo_fallback.min(self.t_max)
        };
        let hi = if self.t_max.is_finite() {
            self.t_max
        } else {
            hi_fallback.max(self.t_min)
        };
        (lo, hi)
    }
}

/// JSON persistence form of a [`GeodesicSegment`]. Infinite interval ends are
/// written as `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub dim: usize,
    #[serde(rename = "A")]
    pub base: Vec<f64>,
    #[serde(rename = "X")]
    pub direction: Vec<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub epsilon: f64,
}

pub(crate) fn row_major(m: &Mat) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl From<GeodesicSegment> for SegmentRecord {
    fn from(s: GeodesicSegment) -> Self {
        SegmentRecord {
            dim: s.dim(),
            base: row_major(&s.base),
            direction: row_major(&s.direction),
            t_min: s.t_min.is_finite().then_some(s.t_min),
            t_max: s.t_max.is_finite().then_some(s.t_max),
            epsilon: s.epsilon,
        }
    }
}

impl TryFrom<SegmentRecord> for GeodesicSegment {
    type Error = GpcaError;

    fn try_from(r: SegmentRecord) -> Result<Self> {
        let d = r.dim;
        if r.base.len() != d * d || r.direction.len() != d * d {
            return Err(GpcaError::DimensionMismatch {
                expected: d * d,
                got: r.base.len().max(r.direction.len()),
            });
        }
        let base = FiberRepresentative::new(Mat::from_row_slice(d, d, &r.base))?;
        let direction = TangentMatrix(Mat::from_row_slice(d, d, &r.direction));
        let mut seg = GeodesicSegment::new(&base, &direction, r.epsilon)?;
        // Stored ends take precedence: they are what the fit clipped against.
        seg.t_min = r.t_min.unwrap_or(f64::NEG_INFINITY);
        seg.t_max = r.t_max.unwrap_or(f64::INFINITY);
        Ok(seg)
    }
}

impl std::fmt::Display for GeodesicSegment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "geodesic(d={}, t∈[{}, {}])", self.dim(), self.t_min, self.t_max)
    }
}
