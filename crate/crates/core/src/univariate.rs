//! One-dimensional Gaussians as points of the half-plane `(m, σ)`, σ > 0.
//!
//! The quantile map `N(m, σ²) ↦ m + σF₀⁻¹` is an isometry into L²([0,1]) and
//! its image is flat, so Wasserstein PCA of 1-D Gaussians reduces to
//! orthogonal-distance regression in `(m, σ)` coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::solver::{fit_first_component, SolverConfig};
use crate::spd::SpdMatrix;

/// Relative floor on σ along a fitted component, as a fraction of the
/// largest σ in the data.
pub const SIGMA_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian1D")]
pub struct Gaussian1D {
    m: f64,
    sigma: f64,
}

#[derive(Deserialize)]
struct RawGaussian1D {
    m: f64,
    sigma: f64,
}

impl TryFrom<RawGaussian1D> for Gaussian1D {
    type Error = GpcaError;

    fn try_from(raw: RawGaussian1D) -> Result<Self> {
        Gaussian1D::new(raw.m, raw.sigma)
    }
}

impl Gaussian1D {
    pub fn new(m: f64, sigma: f64) -> Result<Self> {
        if !m.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(GpcaError::InvalidArgument(format!(
                "N(m, σ²) needs finite m and σ > 0, got m = {m}, σ = {sigma}"
            )));
        }
        Ok(Self { m, sigma })
    }

    pub fn mean(&self) -> f64 {
        self.m
    }

    pub fn std(&self) -> f64 {
        self.sigma
    }

    /// Quantile function `m + σF₀⁻¹(p)` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.m + self.sigma * standard_normal_quantile(p)
    }
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn w2_1d(g1: &Gaussian1D, g2: &Gaussian1D) -> f64 {
    (g1.m - g2.m).hypot(g1.sigma - g2.sigma)
}

/// L²([0,1]) distance between the quantile functions by the midpoint rule on
/// `nodes` cells. Slow, independent of `w2_1d`.
pub fn quantile_distance(g1: &Gaussian1D, g2: &Gaussian1D, nodes: usize) -> f64 {
    let h = 1.0 / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|i| {
            let p = (i as f64 + 0.5) * h;
            (g1.quantile(p) - g2.quantile(p)).powi(2)
        })
        .sum();
    (sum * h).sqrt()
}

/// First principal component of a 1-D Gaussian cloud: the line
/// `center + t·direction` in `(m, σ)` coordinates, `direction` a unit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit1D {
    pub center: Gaussian1D,
    pub direction: [f64; 2],
    pub times: Vec<f64>,
    pub cost: f64,
    /// `[t_min, t_max]`; infinite ends are `None`.
    pub interval: (Option<f64>, Option<f64>),
    /// Some projection time hit the σ floor.
    pub clipped: bool,
    /// All points coincide, so the direction is arbitrary (the σ-axis).
    pub degenerate: bool,
}

impl Fit1D {
    pub fn point(&self, t: f64) -> Result<Gaussian1D> {
        Gaussian1D::new(
            self.center.m + t * self.direction[0],
            self.center.sigma + t * self.direction[1],
        )
    }

    fn clip(&self, t: f64) -> f64 {
        let t = self.interval.0.map_or(t, |lo| t.max(lo));
        self.interval.1.map_or(t, |hi| t.min(hi))
    }
}

/// Times range on a line through `center` with unit `direction` that keeps
/// σ ≥ `floor`.
fn sigma_interval(center: (f64, f64), direction: [f64; 2], floor: f64) -> (Option<f64>, Option<f64>) {
    let ds = direction[1];
    if ds.abs() < f64::EPSILON {
        return (None, None);
    }
    let bound = (floor - center.1) / ds;
    if ds > 0.0 {
        (Some(bound), None)
    } else {
        (None, Some(bound))
    }
}

fn check_cloud(gaussians: &[Gaussian1D]) -> Result<()> {
    if gaussians.len() < 2 {
        return Err(GpcaError::InvalidDataset(format!(
            "need at least 2 Gaussians, got {}",
            gaussians.len()
        )));
    }
    Ok(())
}

fn sigma_floor(gaussians: &[Gaussian1D]) -> f64 {
    SIGMA_MARGIN * gaussians.iter().map(|g| g.sigma).fold(0.0, f64::max)
}

/// Residual of `p` to the line `center + t·u` with `t` clipped to
/// `interval`, together with the clipped time.
fn clipped_residual(
    p: (f64, f64),
    center: (f64, f64),
    u: [f64; 2],
    interval: (Option<f64>, Option<f64>),
) -> (f64, f64) {
    let t = (p.0 - center.0) * u[0] + (p.1 - center.1) * u[1];
    let t = interval.0.map_or(t, |lo| t.max(lo));
    let t = interval.1.map_or(t, |hi| t.min(hi));
    let r = (p.0 - center.0 - t * u[0]).powi(2) + (p.1 - center.1 - t * u[1]).powi(2);
    (r, t)
}

pub fn fit_1d_gpca(gaussians: &[Gaussian1D]) -> Result<Fit1D> {
    check_cloud(gaussians)?;
    let n = gaussians.len() as f64;
    let cm = gaussians.iter().map(|g| g.m).sum::<f64>() / n;
    let cs = gaussians.iter().map(|g| g.sigma).sum::<f64>() / n;
    let (mut smm, mut sms, mut sss) = (0.0, 0.0, 0.0);
    for g in gaussians {
        let (dm, ds) = (g.m - cm, g.sigma - cs);
        smm += dm * dm;
        sms += dm * ds;
        sss += ds * ds;
    }
    let trace = smm + sss;
    let degenerate = trace <= f64::EPSILON * (cm * cm + cs * cs).max(f64::MIN_POSITIVE);
    let direction = if degenerate {
        [0.0, 1.0]
    } else {
        // leading eigenvector of [[smm, sms], [sms, sss]]
        let angle = 0.5 * (2.0 * sms).atan2(smm - sss);
        let (s, c) = angle.sin_cos();
        // orient towards growing σ, ties towards growing m
        if s < 0.0 || (s == 0.0 && c < 0.0) {
            [-c, -s]
        } else {
            [c, s]
        }
    };
    let center = Gaussian1D::new(cm, cs)?;
    let interval = sigma_interval((cm, cs), direction, sigma_floor(gaussians));
    let mut fit = Fit1D {
        center,
        direction,
        times: Vec::with_capacity(gaussians.len()),
        cost: 0.0,
        interval,
        clipped: false,
        degenerate,
    };
    for g in gaussians {
        let (r, t) = clipped_residual((g.m, g.sigma), (cm, cs), direction, interval);
        let raw = (g.m - cm) * direction[0] + (g.sigma - cs) * direction[1];
        fit.clipped |= fit.clip(raw) != raw;
        fit.times.push(t);
        fit.cost += r;
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearch {
    pub cost: f64,
    pub angle: f64,
    pub offset: f64,
    /// Upper bound on `cost − optimum` from the grid spacing, valid when the
    /// clip is inactive at the optimum.
    pub resolution: f64,
}

/// Exhaustive search over lines `{p : ⟨p, ν(φ)⟩ = c}` with `φ` on a regular
/// grid of `angles` points in `[0, π)` and `c` on `offsets` points spanning
/// the data's range along the normal `ν`. Residuals use the same σ floor
/// clipping as [`fit_1d_gpca`].
pub fn grid_search_line(gaussians: &[Gaussian1D], angles: usize, offsets: usize) -> Result<GridSearch> {
    check_cloud(gaussians)?;
    if angles < 1 || offsets < 2 {
        return Err(GpcaError::InvalidArgument(
            "grid needs ≥ 1 angle and ≥ 2 offsets".into(),
        ));
    }
    let floor = sigma_floor(gaussians);
    let n = gaussians.len() as f64;
    let best = (0..angles)
        .into_par_iter()
        .map(|i| {
            let phi = std::f64::consts::PI * i as f64 / angles as f64;
            let (s, c) = phi.sin_cos();
            let u = [c, s];
            let nu = (-s, c);
            let proj: Vec<f64> = gaussians.iter().map(|g| g.m * nu.0 + g.sigma * nu.1).collect();
            let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut best = (f64::INFINITY, phi, lo);
            for j in 0..offsets {
                let off = lo + (hi - lo) * j as f64 / (offsets - 1) as f64;
                let base = (off * nu.0, off * nu.1);
                let interval = sigma_interval(base, u, floor);
                let cost: f64 = gaussians
                    .iter()
                    .map(|g| clipped_residual((g.m, g.sigma), base, u, interval).0)
                    .sum();
                if cost < best.0 {
                    best = (cost, phi, off);
                }
            }
            (best, hi - lo)
        })
        .collect::<Vec<_>>();
    let max_width = best.iter().map(|b| b.1).fold(0.0, f64::max);
    let (cost, angle, offset) = best
        .into_iter()
        .map(|b| b.0)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one angle");
    // the offset error is at most half a cell; the angle error at most half
    // an angular cell, costing at most its square times the total spread
    let cell = max_width / (offsets - 1) as f64;
    let dphi = std::f64::consts::PI / angles as f64;
    let spread: f64 = {
        let cm = gaussians.iter().map(|g| g.m).sum::<f64>() / n;
        let cs = gaussians.iter().map(|g| g.sigma).sum::<f64>() / n;
        gaussians
            .iter()
            .map(|g| (g.m - cm).powi(2) + (g.sigma - cs).powi(2))
            .sum()
    };
    let resolution = n * (0.5 * cell).powi(2) + spread * (0.5 * dphi).powi(2) + 1e-12 * (1.0 + spread);
    Ok(GridSearch {
        cost,
        angle,
        offset,
        resolution,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosscheck {
    pub oracle_cost: f64,
    pub solver_cost: f64,
    pub oracle_times: Vec<f64>,
    /// Solver times re-oriented and shifted to the oracle's origin.
    pub solver_times: Vec<f64>,
    pub cost_gap: f64,
    pub max_time_gap: f64,
    pub solver_converged: bool,
}

impl Crosscheck {
    pub fn agrees(&self, tol: f64) -> bool {
        self.cost_gap <= tol && self.max_time_gap <= tol
    }
}

/// Fits centered 1-D Gaussians both with the general solver on the 1×1
/// covariances `σ²` and with the σ-axis restriction of the oracle.
pub fn crosscheck_with_solver(gaussians: &[Gaussian1D], config: &SolverConfig) -> Result<Crosscheck> {
    check_cloud(gaussians)?;
    if let Some(i) = gaussians.iter().position(|g| g.m != 0.0) {
        return Err(GpcaError::InvalidArgument(format!(
            "crosscheck needs centered Gaussians; entry {i} has mean {}",
            gaussians[i].m
        )));
    }
    let n = gaussians.len() as f64;
    let sbar = gaussians.iter().map(|g| g.sigma).sum::<f64>() / n;
    // on the σ-axis every point is its own projection
    let oracle_times: Vec<f64> = gaussians.iter().map(|g| g.sigma - sbar).collect();
    let oracle_cost = 0.0;

    let matrices = gaussians
        .iter()
        .map(|g| SpdMatrix::diagonal(&[g.sigma * g.sigma]))
        .collect::<Result<Vec<_>>>()?;
    let ds = GaussianDataset::new(matrices)?;
    let comp = fit_first_component(&ds, config)?;
    // the solver's line is σ(t) = a + t·x up to sign; map back to σ - σ̄
    let sign = comp.segment.direction()[(0, 0)].signum();
    let tbar = comp.projection_times.iter().sum::<f64>() / n;
    let solver_times: Vec<f64> = comp.projection_times.iter().map(|t| sign * (t - tbar)).collect();
    let max_time_gap = oracle_times
        .iter()
        .zip(&solver_times)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Crosscheck {
        oracle_cost,
        solver_cost: comp.cost,
        cost_gap: (comp.cost - oracle_cost).abs(),
        oracle_times,
        solver_times,
        max_time_gap,
        solver_converged: comp.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(m: f64, s: f64) -> Gaussian1D {
        Gaussian1D::new(m, s).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Gaussian1D> {
        (0..n)
            .map(|_| g(rng.random_range(-2.0..2.0), rng.random_range(0.3..2.5)))
            .collect()
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(Gaussian1D::new(0.0, 0.0).is_err());
        assert!(Gaussian1D::new(0.0, -1.0).is_err());
        assert!(Gaussian1D::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok: Gaussian1D = serde_json::from_str(r#"{"m": 1.0, "sigma": 2.0}"#).unwrap();
        assert_eq!(ok, g(1.0, 2.0));
        assert!(serde_json::from_str::<Gaussian1D>(r#"{"m": 1.0, "sigma": -2.0}"#).is_err());
    }

    #[test]
    fn w2_closed_form() {
        assert_eq!(w2_1d(&g(0.3, 1.2), &g(0.3, 1.2)), 0.0);
        assert!((w2_1d(&g(0.0, 1.0), &g(1.0, 2.0)) - 2f64.sqrt()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = random_cloud(&mut rng, 3);
            assert!(w2_1d(&c[0], &c[2]) <= w2_1d(&c[0], &c[1]) + w2_1d(&c[1], &c[2]) + 1e-12);
        }
    }

    #[test]
    fn quantile_map_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let c = random_cloud(&mut rng, 2);
            let q = quantile_distance(&c[0], &c[1], 200_000);
            // the midpoint rule loses the tails of F₀⁻¹ slowly
            assert!((q - w2_1d(&c[0], &c[1])).abs() < 1e-4 * (1.0 + w2_1d(&c[0], &c[1])));
        }
    }

    #[test]
    fn quantile_inner_products() {
        let nodes = 400_000;
        let h = 1.0 / nodes as f64;
        let (mut mean, mut norm) = (0.0, 0.0);
        for i in 0..nodes {
            let q = standard_normal_quantile((i as f64 + 0.5) * h);
            mean += q * h;
            norm += q * q * h;
        }
        assert!(mean.abs() < 1e-9);
        assert!((norm - 1.0).abs() < 1e-4);
        assert!((standard_normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn collinear_points_cost_nothing() {
        let cloud: Vec<_> = (0..5).map(|i| g(0.5 * i as f64, 1.0 + 0.25 * i as f64)).collect();
        let fit = fit_1d_gpca(&cloud).unwrap();
        assert!(fit.cost < 1e-24);
        assert!(!fit.clipped && !fit.degenerate);
    }

    #[test]
    fn centered_cloud_gives_the_sigma_axis() {
        let cloud = [g(0.0, 1.0), g(0.0, 2.5), g(0.0, 1.5), g(0.0, 0.5)];
        let fit = fit_1d_gpca(&cloud).unwrap();
        assert!(fit.direction[0].abs() < 1e-15 && fit.direction[1] > 0.0);
        assert!(fit.cost < 1e-24);
        for (t, p) in fit.times.iter().zip(&cloud) {
            assert!((t - (p.sigma - 1.375)).abs() < 1e-14);
        }
        let grid = grid_search_line(&cloud, 1000, 200).unwrap();
        assert!(grid.cost <= grid.resolution);
        assert!((grid.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let fit = fit_1d_gpca(&[g(1.0, 2.0); 3]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.cost, 0.0);
        assert!(fit_1d_gpca(&[g(1.0, 2.0)]).is_err());
    }

    #[test]
    fn matches_brute_force_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let cloud = random_cloud(&mut rng, 12);
            let fit = fit_1d_gpca(&cloud).unwrap();
            let grid = grid_search_line(&cloud, 2000, 400).unwrap();
            assert!(grid.cost >= fit.cost - 1e-12);
            assert!(grid.cost - fit.cost <= grid.resolution, "{grid:?} vs {}", fit.cost);
        }
    }

    #[test]
    fn fitted_points_remain_gaussian() {
        // nearly horizontal cloud far from the axis plus a low outlier
        let cloud = [
            g(-6.0, 0.2),
            g(-3.0, 0.6),
            g(0.0, 1.0),
            g(3.0, 1.4),
            g(6.0, 1.8),
            g(0.5, 0.05),
        ];
        let fit = fit_1d_gpca(&cloud).unwrap();
        for &t in &fit.times {
            assert!(fit.point(t).unwrap().std() > 0.0);
        }
    }

    #[test]
    fn clip_activates_only_past_the_boundary() {
        // steep line crossing σ = 0 with a datum projecting below it
        let cloud = [g(0.0, 0.1), g(0.1, 1.0), g(0.2, 2.0), g(-3.0, 0.05)];
        let fit = fit_1d_gpca(&cloud).unwrap();
        let raw: Vec<f64> = cloud
            .iter()
            .map(|p| (p.m - fit.center.m) * fit.direction[0] + (p.sigma - fit.center.sigma) * fit.direction[1])
            .collect();
        let crosses = raw
            .iter()
            .any(|&t| fit.center.sigma + t * fit.direction[1] <= sigma_floor(&cloud));
        assert_eq!(fit.clipped, crosses);
        assert!(fit.clipped);
        for &t in &fit.times {
            assert!(fit.point(t).is_ok());
        }
        let plain = fit_1d_gpca(&[g(0.0, 1.0), g(1.0, 1.0), g(2.0, 1.1)]).unwrap();
        assert!(!plain.clipped);
    }

    #[test]
    fn solver_agrees_on_centered_data() {
        let cloud = [g(0.0, 1.0), g(0.0, 2.0), g(0.0, 3.0)];
        let report = crosscheck_with_solver(&cloud, &SolverConfig::default()).unwrap();
        assert!(report.agrees(1e-6), "{report:?}");
        for (t, e) in report.solver_times.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((t - e).abs() < 1e-6);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let cloud: Vec<_> = (0..8).map(|_| g(0.0, rng.random_range(0.2..3.0))).collect();
            let report = crosscheck_with_solver(&cloud, &SolverConfig::default()).unwrap();
            assert!(report.agrees(1e-6), "{report:?}");
        }
        assert!(crosscheck_with_solver(&[g(1.0, 1.0), g(0.0, 2.0)], &SolverConfig::default()).is_err());
    }
}
