//! Tangent PCA at the Bures-Wasserstein barycenter, and the closed-form tools
//! used to compare it against geodesic PCA.

use serde::{Deserialize, Serialize};

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::geodesic::GeodesicSegment;
use crate::linalg::{self, Mat};
use crate::spd::{bures_wasserstein_sq, bw_log, monge_with_roots, spectral_to_spd, SpdMatrix, SpectralCoords};

pub const BARYCENTER_TOL: f64 = 1e-12;
pub const BARYCENTER_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone)]
pub struct Barycenter {
    pub matrix: SpdMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `‖(1/n) Σ_i Log_Σ̄(Σ_i)‖`, zero at the exact barycenter.
    pub gradient_norm: f64,
}

/// Fixed-point iteration
/// `Σ ← Σ^{-1/2} ((1/n) Σ_i (Σ^{1/2} Σ_i Σ^{1/2})^{1/2})² Σ^{-1/2}`
/// started at `(mean trace / d) I`. Stops when successive iterates differ by
/// less than `tol · max(1, ‖Σ‖)`.
pub fn bw_barycenter(dataset: &GaussianDataset, tol: f64, max_iters: usize) -> Result<Barycenter> {
    let d = dataset.dim();
    let n = dataset.len() as f64;
    let mean_trace = dataset.matrices().iter().map(|m| m.trace()).sum::<f64>() / n;
    let mut s = Mat::identity(d, d) * (mean_trace / d as f64);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let (values, vectors) = linalg::sym_eigen(&s);
        if values[0] <= 0.0 {
            return Err(GpcaError::Numeric("barycenter iterate lost definiteness".into()));
        }
        let root = spectral(&values, &vectors, f64::sqrt);
        let inv_root = spectral(&values, &vectors, |x| 1.0 / x.sqrt());
        let mut mean = Mat::zeros(d, d);
        for m in dataset.matrices() {
            mean += linalg::sqrt_psd(&linalg::sym(&(&root * m.matrix() * &root)));
        }
        mean /= n;
        let next = linalg::sym(&(&inv_root * &mean * &mean * &inv_root));
        let step = (&next - &s).norm();
        s = next;
        if step < tol * s.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    let matrix = SpdMatrix::new(s)?;
    let mut grad = Mat::zeros(d, d);
    for m in dataset.matrices() {
        grad += bw_log(&matrix, m)?;
    }
    Ok(Barycenter {
        matrix,
        iterations,
        converged,
        gradient_norm: grad.norm() / n,
    })
}

fn spectral(values: &[f64], vectors: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(v));
    }
    linalg::sym(&(scaled * vectors.transpose()))
}

/// Monge maps from `base` to each matrix, sharing one square root.
fn monge_maps(base: &SpdMatrix, targets: &[&SpdMatrix]) -> Vec<Mat> {
    let root = linalg::sqrt_psd(base.matrix());
    let inv_root = linalg::sym_apply(base.matrix(), |x| 1.0 / x.sqrt());
    targets
        .iter()
        .map(|s| monge_with_roots(&root, &inv_root, s.matrix()))
        .collect()
}

/// `‖T₁ − T₂‖_{Σ̄} = √tr((T₁ − T₂) Σ̄ (T₁ − T₂))` with `T_i` the Monge maps
/// from `Σ̄`.
pub fn linearized_bw(sbar: &SpdMatrix, s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    if s1.dim() != sbar.dim() || s2.dim() != sbar.dim() {
        return Err(GpcaError::DimensionMismatch {
            expected: sbar.dim(),
            got: if s1.dim() != sbar.dim() { s1.dim() } else { s2.dim() },
        });
    }
    let maps = monge_maps(sbar, &[s1, s2]);
    Ok(weighted_norm(&(&maps[0] - &maps[1]), sbar.matrix()))
}

fn weighted_norm(k: &Mat, sbar: &Mat) -> f64 {
    (k * sbar * k.transpose()).trace().max(0.0).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TpcaResult {
    #[serde(with = "spd_serde")]
    pub barycenter: SpdMatrix,
    /// `T_i − I`, uncentered.
    #[serde(with = "mats_serde")]
    pub embedded: Vec<Mat>,
    /// Orthonormal under `⟨K, K'⟩ = tr(K Σ̄ K')`.
    #[serde(with = "mats_serde")]
    pub principal_directions: Vec<Mat>,
    /// Non-increasing; the full spectrum of the covariance is kept.
    pub eigenvalues: Vec<f64>,
    /// `projection_scores[i][j]`: score of datum `i` on direction `j`.
    pub projection_scores: Vec<Vec<f64>>,
    pub barycenter_iterations: usize,
    pub barycenter_converged: bool,
    pub barycenter_gradient_norm: f64,
}

/// Euclidean PCA of `{T_i − I}` under the `Σ̄`-weighted inner product, keeping
/// `k` directions.
pub fn fit_tpca(dataset: &GaussianDataset, k: usize) -> Result<TpcaResult> {
    let d = dataset.dim();
    let m = d * (d + 1) / 2;
    if k == 0 || k > m {
        return Err(GpcaError::InvalidArgument(format!(
            "number of tangent components must be in 1..={m}, got {k}"
        )));
    }
    let bary = bw_barycenter(dataset, BARYCENTER_TOL, BARYCENTER_MAX_ITERS)?;
    let sbar = &bary.matrix;
    let identity = Mat::identity(d, d);
    let targets: Vec<&SpdMatrix> = dataset.matrices().iter().collect();
    let embedded: Vec<Mat> = monge_maps(sbar, &targets).into_iter().map(|t| t - &identity).collect();

    let n = embedded.len() as f64;
    let mean = embedded.iter().fold(Mat::zeros(d, d), |acc, e| acc + e) / n;
    let root = linalg::sqrt_psd(sbar.matrix());
    let basis = linalg::weighted_sym_basis(&root, &[]);
    let coords: Vec<Vec<f64>> = embedded
        .iter()
        .map(|e| {
            let centered = (e - &mean) * &root;
            basis.iter().map(|b| linalg::inner(&centered, &(b * &root))).collect()
        })
        .collect();

    let mut cov = Mat::zeros(m, m);
    for c in &coords {
        for i in 0..m {
            for j in 0..m {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    cov /= n;
    let (values, vectors) = linalg::sym_eigen(&cov);
    let order: Vec<usize> = (0..m).rev().collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&j| values[j].max(0.0)).collect();
    let principal_directions: Vec<Mat> = order[..k]
        .iter()
        .map(|&j| {
            basis
                .iter()
                .enumerate()
                .fold(Mat::zeros(d, d), |acc, (i, b)| acc + b * vectors[(i, j)])
        })
        .collect();
    let projection_scores = coords
        .iter()
        .map(|c| {
            order[..k]
                .iter()
                .map(|&j| (0..m).map(|i| c[i] * vectors[(i, j)]).sum())
                .collect()
        })
        .collect();

    Ok(TpcaResult {
        barycenter: bary.matrix.clone(),
        embedded,
        principal_directions,
        eigenvalues,
        projection_scores,
        barycenter_iterations: bary.iterations,
        barycenter_converged: bary.converged,
        barycenter_gradient_norm: bary.gradient_norm,
    })
}

/// Lift of tangent direction `j` to a segment with base `Σ̄^{1/2}`.
pub fn tpca_component_as_segment(result: &TpcaResult, j: usize, epsilon: f64) -> Result<GeodesicSegment> {
    let k = result.principal_directions.get(j).ok_or_else(|| {
        GpcaError::InvalidArgument(format!(
            "component index {j} out of range ({} fitted)",
            result.principal_directions.len()
        ))
    })?;
    if !(epsilon > 0.0) {
        return Err(GpcaError::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let a = linalg::sqrt_psd(result.barycenter.matrix());
    let x = k * &a;
    GeodesicSegment::from_parts(a, x, epsilon)
}

/// `(exact, approx)` distortion of the linearized distance at
/// `Σ̄ = ((a+b)/2)² I` between `diag(a², b²)` and its rotation by `θ`.
pub fn distortion_ratio(a: f64, b: f64, theta: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) || !theta.is_finite() {
        return Err(GpcaError::InvalidArgument(format!(
            "need a, b > 0 and finite θ, got a={a}, b={b}, θ={theta}"
        )));
    }
    if a == b {
        return Err(GpcaError::InvalidArgument("a = b gives identical matrices".into()));
    }
    let s = spectral_to_spd(SpectralCoords { a, b, theta: 0.0 })?;
    let sp = spectral_to_spd(SpectralCoords { a, b, theta })?;
    let c = (a + b) / 2.0;
    let sbar = SpdMatrix::diagonal(&[c * c; 2])?;
    let lin = linearized_bw(&sbar, &s, &sp)?;
    let scale = (a - b).abs();
    if lin <= 1e-12 * scale {
        return Err(GpcaError::InvalidArgument(format!(
            "θ = {theta} gives zero linearized distance"
        )));
    }
    let exact = bures_wasserstein_sq(&s, &sp)? / (lin * lin);
    let r = (a - b) / (a + b);
    let approx = 1.0 - r * r * theta.cos().powi(2);
    Ok((exact, approx))
}

/// Sectional curvature term `R_Σ̄(U, U', U, U')` for the pair of
/// [`distortion_ratio`], from the bracket formula in the eigenbasis of `Σ̄`.
pub fn curvature_value(a: f64, b: f64, theta: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(GpcaError::InvalidArgument(format!("need a, b > 0, got a={a}, b={b}")));
    }
    let s = spectral_to_spd(SpectralCoords { a, b, theta: 0.0 })?;
    let sp = spectral_to_spd(SpectralCoords { a, b, theta })?;
    let c = (a + b) / 2.0;
    let sbar = SpdMatrix::diagonal(&[c * c, c * c])?;
    curvature_term(&sbar, &bw_log(&sbar, &s)?, &bw_log(&sbar, &sp)?)
}

/// `(3/2) Σ_ij d_i d_j/(d_i + d_j) [U₀, U₀']²_ij` with `U = U₀Σ̄ + Σ̄U₀`.
pub fn curvature_term(sbar: &SpdMatrix, u: &Mat, v: &Mat) -> Result<f64> {
    let solve = |m: &Mat| {
        linalg::solve_sylvester_sym(sbar.matrix(), m).ok_or_else(|| GpcaError::Numeric("Sylvester solve failed".into()))
    };
    let u0 = solve(u)?;
    let v0 = solve(v)?;
    let (d, p) = linalg::sym_eigen(sbar.matrix());
    let bracket = &u0 * &v0 - &v0 * &u0;
    let rotated = p.transpose() * bracket * &p;
    let mut total = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            total += d[i] * d[j] / (d[i] + d[j]) * rotated[(i, j)].powi(2);
        }
    }
    Ok(1.5 * total)
}

/// Closed form `(3/2)(a−b)⁴/(a+b)² sin²2θ`.
pub fn curvature_closed_form(a: f64, b: f64, theta: f64) -> f64 {
    1.5 * (a - b).powi(4) / (a + b).powi(2) * (2.0 * theta).sin().powi(2)
}

pub(crate) mod spd_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Raw {
        dim: usize,
        entries: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &SpdMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        Raw {
            dim: m.dim(),
            entries: m.to_row_major(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<SpdMatrix, D::Error> {
        let raw = Raw::deserialize(d)?;
        SpdMatrix::from_row_slice(raw.dim, &raw.entries).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod mats_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = ms.iter().map(crate::geodesic::row_major).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        rows.into_iter()
            .map(|r| {
                let dim = (r.len() as f64).sqrt().round() as usize;
                if dim * dim != r.len() {
                    return Err(serde::de::Error::custom(format!(
                        "{} entries is not a square matrix",
                        r.len()
                    )));
                }
                Ok(Mat::from_row_slice(dim, dim, &r))
            })
            .collect()
    }
}
