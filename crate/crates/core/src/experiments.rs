//! Synthetic datasets in the spectral parameterization
//! `Σ(a, b, θ) = P_θ diag(a², b²) P_θᵀ`, and the GPCA/TPCA comparison
//! experiments built on them.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::solver::{
    component_for_segment, explained_dispersion, fit_components, ExplainedDispersion, PrincipalComponent, SolverConfig,
};
use crate::spd::{bures_wasserstein, spd_to_cone, spectral_to_spd, ConeCoords, SpectralCoords};
use crate::tpca::{fit_tpca, tpca_component_as_segment, TpcaResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `na · nb` matrices `diag(a_i², b_j²)`, with `a_i` equally spaced between
/// the square roots of the bounds of `a2_range` (likewise `b_j`).
pub fn gen_grid(a2_range: (f64, f64), b2_range: (f64, f64), na: usize, nb: usize) -> Result<GaussianDataset> {
    for (lo, hi) in [a2_range, b2_range] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(GpcaError::InvalidArgument(format!(
                "grid range [{lo}, {hi}] must be positive and ordered"
            )));
        }
    }
    if na < 2 || nb < 2 {
        return Err(GpcaError::InvalidArgument(format!(
            "grid needs at least 2 × 2 points, got {na} × {nb}"
        )));
    }
    let a = spaced(a2_range.0.sqrt(), a2_range.1.sqrt(), na);
    let b = spaced(b2_range.0.sqrt(), b2_range.1.sqrt(), nb);
    let mut matrices = Vec::with_capacity(na * nb);
    for &ai in &a {
        for &bj in &b {
            matrices.push(spectral_to_spd(SpectralCoords {
                a: ai,
                b: bj,
                theta: 0.0,
            })?);
        }
    }
    GaussianDataset::new(matrices)
}

fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `Σ(a, b, θ_i)` with `θ_i = iπ(1 − opening)/n`, `i = 0, …, n−1`.
pub fn gen_circle(a: f64, b: f64, n: usize, opening: f64) -> Result<GaussianDataset> {
    if !(a > b && b > 0.0) {
        return Err(GpcaError::InvalidArgument(format!(
            "circle needs a > b > 0, got a = {a}, b = {b}"
        )));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(GpcaError::InvalidArgument(format!(
            "circle size must be even and ≥ 2, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&opening) {
        return Err(GpcaError::InvalidArgument(format!(
            "opening must lie in [0, 1), got {opening}"
        )));
    }
    let matrices = (0..n)
        .map(|i| {
            let theta = i as f64 * PI * (1.0 - opening) / n as f64;
            spectral_to_spd(SpectralCoords { a, b, theta })
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianDataset::new(matrices)
}

/// `(a, b)` with `a + b = 2` and `|a − b|/|a + b| = ratio`.
pub fn circle_parameters(ratio: f64) -> Result<(f64, f64)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GpcaError::InvalidArgument(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    Ok((1.0 + ratio, 1.0 - ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub theta: (f64, f64),
}

impl Default for SpectralRanges {
    fn default() -> Self {
        SpectralRanges {
            a: (0.5, 2.0),
            b: (0.5, 2.0),
            theta: (0.0, PI),
        }
    }
}

/// `n` matrices with `a, b, θ` i.i.d. uniform on `ranges`.
pub fn gen_random_spectral(n: usize, ranges: &SpectralRanges, seed: u64) -> Result<GaussianDataset> {
    for (lo, hi) in [ranges.a, ranges.b] {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(GpcaError::InvalidArgument(format!(
                "spectral range [{lo}, {hi}] must be positive and ordered"
            )));
        }
    }
    if !(ranges.theta.1 > ranges.theta.0) {
        return Err(GpcaError::InvalidArgument("θ range must be ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices = (0..n)
        .map(|_| {
            let a = rng.random_range(ranges.a.0..ranges.a.1);
            let b = rng.random_range(ranges.b.0..ranges.b.1);
            let theta = rng.random_range(ranges.theta.0..ranges.theta.1);
            spectral_to_spd(SpectralCoords { a, b, theta })
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianDataset::new(matrices)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub solver: SolverConfig,
    /// Number of geodesic components to fit (≥ 1).
    pub components: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            solver: SolverConfig::default(),
            components: 2,
        }
    }
}

/// Per-datum projection data of one method.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionRow {
    pub index: usize,
    pub tpca_score: f64,
    pub tpca_time: f64,
    pub gpca_times: Vec<f64>,
    pub cone: Option<ConeCoords>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub tpca_cost: f64,
    pub gpca_cost: f64,
    /// `100 (TPCA − GPCA) / TPCA`; `0` when both costs vanish.
    pub improvement_pct: f64,
    pub tpca: TpcaResult,
    /// The first tangent direction lifted to a segment, with optimal
    /// rotations.
    pub tpca_component: PrincipalComponent,
    pub gpca_components: Vec<PrincipalComponent>,
    pub dispersion: ExplainedDispersion,
    /// Smallest BW distance from the first GPCA geodesic to the barycenter.
    pub gpca_distance_to_barycenter: f64,
    pub converged: bool,
    pub projections: Vec<ProjectionRow>,
}

impl Comparison {
    /// Every restart trace of every GPCA component is non-increasing.
    pub fn traces_monotone(&self) -> bool {
        self.gpca_components.iter().all(PrincipalComponent::trace_monotone)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
    /// Excluded from determinism checks.
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn new<C: Serialize, R: Serialize>(experiment: &str, config: &C, results: &R, seconds: f64) -> Result<Self> {
        let to_value = |v: serde_json::Result<serde_json::Value>| v.map_err(|e| GpcaError::Numeric(e.to_string()));
        Ok(ExperimentReport {
            experiment: experiment.to_string(),
            version: VERSION.to_string(),
            config: to_value(serde_json::to_value(config))?,
            results: to_value(serde_json::to_value(results))?,
            timings: Timings { total_seconds: seconds },
        })
    }

    /// The report without its timings, for reproducibility comparisons.
    pub fn without_timings(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("timings");
        }
        v
    }
}

pub fn improvement_pct(tpca_cost: f64, gpca_cost: f64) -> f64 {
    if tpca_cost > 0.0 {
        100.0 * (tpca_cost - gpca_cost) / tpca_cost
    } else {
        0.0
    }
}

/// Minimum over `t` of `BW(Σ(t), target)` on the segment, by a coarse scan
/// refined with golden-section search.
fn distance_to(component: &PrincipalComponent, target: &crate::spd::SpdMatrix) -> f64 {
    let seg = &component.segment;
    let (lo, hi) = component
        .projection_times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let pad = (hi - lo).max(1.0);
    let (lo, hi) = (seg.clip_time(lo - pad), seg.clip_time(hi + pad));
    let dist = |t: f64| {
        seg.eval(seg.clip_time(t))
            .ok()
            .and_then(|s| bures_wasserstein(&s, target).ok())
            .unwrap_or(f64::INFINITY)
    };
    let grid = 200;
    let h = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|i| lo + h * i as f64)
        .min_by(|&x, &y| dist(x).total_cmp(&dist(y)))
        .unwrap_or(lo);
    let t = crate::solver::golden_section(dist, (best - h).max(lo), (best + h).min(hi), 100);
    dist(t).min(dist(best))
}

/// Fits TPCA and GPCA on one dataset; both costs are `F` on their lifted
/// segments with optimal rotations.
pub fn run_comparison(dataset: &GaussianDataset, config: &ComparisonConfig) -> Result<Comparison> {
    if config.components == 0 {
        return Err(GpcaError::InvalidArgument("at least one component is required".into()));
    }
    let d = dataset.dim();
    let tpca = fit_tpca(dataset, config.components.min(d * (d + 1) / 2))?;
    let tpca_seg = tpca_component_as_segment(&tpca, 0, config.solver.epsilon)?;
    let tpca_component = component_for_segment(dataset, &tpca_seg, &config.solver)?;
    let gpca_components = fit_components(dataset, config.components, &config.solver)?;
    let first = &gpca_components[0];
    let dispersion = explained_dispersion(dataset, &gpca_components)?;
    let converged = gpca_components.iter().all(|c| c.converged);
    let projections = (0..dataset.len())
        .map(|i| ProjectionRow {
            index: i,
            tpca_score: tpca.projection_scores[i][0],
            tpca_time: tpca_component.projection_times[i],
            gpca_times: gpca_components.iter().map(|c| c.projection_times[i]).collect(),
            cone: spd_to_cone(&dataset.matrices()[i]).ok(),
        })
        .collect();
    Ok(Comparison {
        tpca_cost: tpca_component.cost,
        gpca_cost: first.cost,
        improvement_pct: improvement_pct(tpca_component.cost, first.cost),
        gpca_distance_to_barycenter: distance_to(first, &tpca.barycenter),
        tpca,
        tpca_component,
        converged,
        dispersion,
        projections,
        gpca_components,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionConfig {
    pub ratios: Vec<f64>,
    pub n: usize,
    pub trials_per_ratio: usize,
    pub opening: f64,
    pub solver: SolverConfig,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        DistortionConfig {
            ratios: vec![0.2, 0.4, 0.6, 0.8],
            n: 20,
            trials_per_ratio: 1,
            opening: 0.05,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionRow {
    pub ratio: f64,
    pub tpca_cost: f64,
    pub gpca_cost: f64,
    pub improvement_pct: f64,
    pub predicted_distortion: f64,
    pub converged: bool,
    pub monotone: bool,
}

/// Mean over `θ ∈ [0, π)` of `1 − r² cos²θ`, which is `1 − r²/2`.
pub fn predicted_distortion(ratio: f64) -> f64 {
    let steps = 2000;
    let mean: f64 = (0..steps)
        .map(|i| {
            let theta = (i as f64 + 0.5) * PI / steps as f64;
            1.0 - ratio * ratio * theta.cos().powi(2)
        })
        .sum::<f64>()
        / steps as f64;
    mean
}

/// Improvement of GPCA over TPCA on open circles of increasing anisotropy.
/// Trial `j` of a ratio uses solver seed `seed + j`; the row keeps the trial
/// with the lowest GPCA cost.
pub fn run_distortion_curve(config: &DistortionConfig) -> Result<Vec<DistortionRow>> {
    if config.trials_per_ratio == 0 {
        return Err(GpcaError::InvalidArgument("trials_per_ratio must be positive".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..config.ratios.len())
        .flat_map(|r| (0..config.trials_per_ratio).map(move |j| (r, j)))
        .collect();
    // (ratio index, TPCA cost, GPCA cost, converged, monotone)
    type Trial = (usize, f64, f64, bool, bool);
    let results: Vec<Result<Trial>> = jobs
        .par_iter()
        .map(|&(r, j)| {
            let (a, b) = circle_parameters(config.ratios[r])?;
            let dataset = gen_circle(a, b, config.n, config.opening)?;
            let cmp = ComparisonConfig {
                solver: SolverConfig {
                    seed: config.solver.seed.wrapping_add(j as u64),
                    ..config.solver
                },
                components: 1,
            };
            let c = run_comparison(&dataset, &cmp)?;
            Ok((r, c.tpca_cost, c.gpca_cost, c.converged, c.traces_monotone()))
        })
        .collect();
    let mut rows: Vec<Option<DistortionRow>> = vec![None; config.ratios.len()];
    for res in results {
        let (r, tpca_cost, gpca_cost, converged, monotone) = res?;
        let better = rows[r].as_ref().is_none_or(|row| gpca_cost < row.gpca_cost);
        if better {
            let ratio = config.ratios[r];
            rows[r] = Some(DistortionRow {
                ratio,
                tpca_cost,
                gpca_cost,
                improvement_pct: improvement_pct(tpca_cost, gpca_cost),
                predicted_distortion: predicted_distortion(ratio),
                converged,
                monotone,
            });
        }
    }
    Ok(rows.into_iter().map(|r| r.expect("every ratio has a trial")).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomTrialsConfig {
    pub trials: usize,
    pub n: usize,
    pub ranges: SpectralRanges,
    pub solver: SolverConfig,
}

impl Default for RandomTrialsConfig {
    fn default() -> Self {
        RandomTrialsConfig {
            trials: 100,
            n: 50,
            ranges: SpectralRanges::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub data_seed: u64,
    pub tpca_cost: f64,
    pub gpca_cost: f64,
    pub improvement_pct: f64,
    pub converged: bool,
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomTrialsSummary {
    pub rows: Vec<TrialRow>,
    pub mean_improvement_pct: f64,
    pub median_improvement_pct: f64,
    pub max_improvement_pct: f64,
}

/// Trial `j` draws its dataset with seed `seed + j` and runs first-component
/// GPCA against TPCA.
pub fn run_random_trials(config: &RandomTrialsConfig) -> Result<RandomTrialsSummary> {
    if config.trials == 0 {
        return Err(GpcaError::InvalidArgument("trials must be positive".into()));
    }
    let rows: Vec<TrialRow> = (0..config.trials)
        .into_par_iter()
        .map(|j| {
            let data_seed = config.solver.seed.wrapping_add(j as u64);
            let dataset = gen_random_spectral(config.n, &config.ranges, data_seed)?;
            let cmp = ComparisonConfig {
                solver: config.solver,
                components: 1,
            };
            let c = run_comparison(&dataset, &cmp)?;
            Ok(TrialRow {
                trial: j,
                data_seed,
                tpca_cost: c.tpca_cost,
                gpca_cost: c.gpca_cost,
                improvement_pct: c.improvement_pct,
                converged: c.converged,
                monotone: c.traces_monotone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.improvement_pct).collect();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(RandomTrialsSummary {
        mean_improvement_pct: sorted.iter().sum::<f64>() / m as f64,
        median_improvement_pct: median,
        max_improvement_pct: sorted[m - 1],
        rows,
    })
}

/// Wall-clock helper for report timings.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::SpdMatrix;

    #[test]
    fn grid_defaults() {
        let ds = gen_grid((1.0, 3.0), (1.0, 2.0), 5, 5).unwrap();
        assert_eq!(ds.len(), 25);
        for m in ds.matrices() {
            assert_eq!(m.matrix()[(0, 1)], 0.0);
        }
        let corners = gen_grid((1.0, 3.0), (1.0, 2.0), 2, 2).unwrap();
        let diag: Vec<(f64, f64)> = corners
            .matrices()
            .iter()
            .map(|m| (m.matrix()[(0, 0)], m.matrix()[(1, 1)]))
            .collect();
        for (got, want) in diag.iter().zip([(1.0, 1.0), (1.0, 2.0), (3.0, 1.0), (3.0, 2.0)]) {
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12);
        }
        assert!(gen_grid((1.0, 3.0), (1.0, 2.0), 1, 5).is_err());
    }

    #[test]
    fn circle_cases() {
        let ds = gen_circle(1.5, 0.5, 2, 0.0).unwrap();
        let expect = [
            SpdMatrix::diagonal(&[2.25, 0.25]).unwrap(),
            SpdMatrix::diagonal(&[0.25, 2.25]).unwrap(),
        ];
        for (m, e) in ds.matrices().iter().zip(&expect) {
            assert!((m.matrix() - e.matrix()).norm() < 1e-12);
        }
        let ds = gen_circle(1.8, 0.2, 20, 0.05).unwrap();
        for m in ds.matrices() {
            assert!((m.trace() - (1.8f64.powi(2) + 0.2f64.powi(2))).abs() < 1e-12);
            assert!((m.matrix().determinant() - (1.8f64 * 0.2).powi(2)).abs() < 1e-12);
        }
        assert!(gen_circle(1.0, 2.0, 4, 0.0).is_err());
        assert!(gen_circle(2.0, 1.0, 5, 0.0).is_err());
        assert!(gen_circle(2.0, 1.0, 4, 1.0).is_err());
    }

    #[test]
    fn random_spectral_is_reproducible() {
        let r = SpectralRanges::default();
        let x = gen_random_spectral(50, &r, 7).unwrap();
        let y = gen_random_spectral(50, &r, 7).unwrap();
        assert_eq!(x.len(), 50);
        for (p, q) in x.matrices().iter().zip(y.matrices()) {
            assert_eq!(p.matrix(), q.matrix());
        }
        let z = gen_random_spectral(50, &r, 8).unwrap();
        assert_ne!(x.matrices()[0].matrix(), z.matrices()[0].matrix());
    }

    #[test]
    fn predicted_distortion_is_mean_of_expansion() {
        for r in [0.0, 0.2, 0.5, 0.8] {
            assert!((predicted_distortion(r) - (1.0 - r * r / 2.0)).abs() < 1e-12);
        }
    }
}
