//! Exact geodesic PCA of Gaussian covariance data.
//!
//! A component is a horizontal segment `A + tX` upstairs together with one
//! rotation `Q_i` per datum; the cost is
//! `F = Σ_i ‖A + clip(t_i) X − Σ_i^{1/2} Q_i‖²` with `t_i` the orthogonal
//! projection time of `Σ_i^{1/2} Q_i`. Fits alternate an exact-as-possible
//! rotation step with a descent step on the segment, so every recorded
//! objective trace is non-increasing.

mod align;
mod constrained;
mod first;

use serde::Serialize;

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::geodesic::{row_major, GeodesicSegment, SegmentRecord, DEFAULT_EPSILON};
use crate::linalg::Mat;
use crate::rotation::RotationDescentConfig;
use crate::spd::{bures_wasserstein_sq, FiberRepresentative, Rotation, TangentMatrix};
use crate::tpca::{bw_barycenter, BARYCENTER_MAX_ITERS, BARYCENTER_TOL};

pub(crate) use align::golden_section;
pub use constrained::{fit_higher_component, fit_second_component};
pub use first::{component_for_segment, fit_first_component, fit_first_component_from};

/// Absolute slack allowed on objective traces, which must not increase.
pub const TRACE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub restarts: usize,
    pub outer_max_iters: usize,
    /// Stop once one outer iteration lowers the cost by less than this
    /// fraction.
    pub outer_tol: f64,
    pub inner: RotationDescentConfig,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: DEFAULT_EPSILON,
            restarts: 5,
            outer_max_iters: 200,
            outer_tol: 1e-8,
            inner: RotationDescentConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.epsilon > 0.0
            && self.restarts > 0
            && self.outer_max_iters > 0
            && self.outer_tol > 0.0
            && self.inner.max_iters > 0
            && self.inner.grad_tol > 0.0
            && self.inner.initial_step > 0.0
            && self.inner.sufficient_decrease > 0.0
            && self.inner.backtrack > 0.0
            && self.inner.backtrack < 1.0;
        if positive {
            Ok(())
        } else {
            Err(GpcaError::InvalidArgument(format!(
                "solver settings must be positive: {self:?}"
            )))
        }
    }
}

/// One fitted principal geodesic.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "ComponentRecord")]
pub struct PrincipalComponent {
    pub order: usize,
    pub segment: GeodesicSegment,
    pub rotations: Vec<Rotation>,
    /// Clipped projection times, one per datum.
    pub projection_times: Vec<f64>,
    pub cost: f64,
    /// Crossing time on the first component (`t*`), for orders ≥ 2.
    pub intersection_time: Option<f64>,
    /// Lifted earlier directions, horizontal at `segment.base()`; `X` is
    /// orthogonal to each.
    pub frame: Vec<TangentMatrix>,
    /// At least one restart met the relative-decrease criterion.
    pub converged: bool,
    /// Outer iterations of the returned restart.
    pub iterations: usize,
    /// Objective after each outer iteration, one trace per restart.
    pub restart_traces: Vec<Vec<f64>>,
    pub restart_costs: Vec<f64>,
    pub best_restart: usize,
}

impl PrincipalComponent {
    /// Objective trace of the returned restart.
    pub fn trace(&self) -> &[f64] {
        &self.restart_traces[self.best_restart]
    }

    /// Every restart trace is non-increasing up to [`TRACE_SLACK`].
    pub fn trace_monotone(&self) -> bool {
        self.restart_traces
            .iter()
            .all(|t| t.windows(2).all(|w| w[1] <= w[0] + TRACE_SLACK))
    }

    /// Largest `|⟨X, F⟩|` over the frame vectors.
    pub fn orthogonality_residual(&self) -> f64 {
        self.frame
            .iter()
            .map(|f| crate::linalg::inner(self.segment.direction(), f.matrix()).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentRecord {
    pub order: usize,
    pub segment: SegmentRecord,
    pub cost: f64,
    pub projection_times: Vec<f64>,
    pub intersection_time: Option<f64>,
    pub rotations: Vec<Vec<f64>>,
    pub frame: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub restart_costs: Vec<f64>,
    pub best_restart: usize,
    pub trace: Vec<f64>,
}

impl From<PrincipalComponent> for ComponentRecord {
    fn from(c: PrincipalComponent) -> Self {
        ComponentRecord {
            order: c.order,
            cost: c.cost,
            intersection_time: c.intersection_time,
            rotations: c.rotations.iter().map(|q| row_major(q.matrix())).collect(),
            frame: c.frame.iter().map(|f| row_major(f.matrix())).collect(),
            converged: c.converged,
            iterations: c.iterations,
            restart_costs: c.restart_costs.clone(),
            best_restart: c.best_restart,
            trace: c.trace().to_vec(),
            projection_times: c.projection_times,
            segment: c.segment.into(),
        }
    }
}

/// `F(A, X, (Q_i))` for a unit horizontal `X` at `A`.
pub fn objective_f(
    a: &FiberRepresentative,
    x: &TangentMatrix,
    rotations: &[Rotation],
    dataset: &GaussianDataset,
    epsilon: f64,
) -> Result<f64> {
    if a.dim() != dataset.dim() {
        return Err(GpcaError::DimensionMismatch {
            expected: dataset.dim(),
            got: a.dim(),
        });
    }
    if rotations.len() != dataset.len() {
        return Err(GpcaError::InvalidArgument(format!(
            "{} rotations for {} data",
            rotations.len(),
            dataset.len()
        )));
    }
    if let Some(q) = rotations.iter().find(|q| q.dim() != dataset.dim()) {
        return Err(GpcaError::DimensionMismatch {
            expected: dataset.dim(),
            got: q.dim(),
        });
    }
    let seg = GeodesicSegment::new(a, x, epsilon)?;
    Ok(segment_cost(&seg, dataset, rotations.iter().map(|q| q.matrix())))
}

pub(crate) fn segment_cost<'a>(
    seg: &GeodesicSegment,
    dataset: &GaussianDataset,
    qs: impl Iterator<Item = &'a Mat>,
) -> f64 {
    qs.enumerate()
        .map(|(i, q)| seg.residual_to(&(dataset.root(i) * q)))
        .sum()
}

/// Fits `k` components: the first, the second through its crossing, then
/// higher orders through the same crossing.
pub fn fit_components(dataset: &GaussianDataset, k: usize, config: &SolverConfig) -> Result<Vec<PrincipalComponent>> {
    let mut components: Vec<PrincipalComponent> = Vec::with_capacity(k);
    for order in 1..=k {
        let c = match order {
            1 => fit_first_component(dataset, config)?,
            2 => fit_second_component(dataset, &components[0], config)?,
            _ => fit_higher_component(dataset, &components, config)?,
        };
        components.push(c);
    }
    Ok(components)
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionEntry {
    pub order: usize,
    pub cost: f64,
    /// `1 − cost / total`; `1` when the total dispersion is zero.
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainedDispersion {
    /// `Σ_i BW²(Σ̄, Σ_i)`.
    pub total: f64,
    pub zero_dispersion: bool,
    pub entries: Vec<DispersionEntry>,
}

pub fn explained_dispersion(
    dataset: &GaussianDataset,
    components: &[PrincipalComponent],
) -> Result<ExplainedDispersion> {
    let bary = bw_barycenter(dataset, BARYCENTER_TOL, BARYCENTER_MAX_ITERS)?;
    let mut total = 0.0;
    for m in dataset.matrices() {
        total += bures_wasserstein_sq(&bary.matrix, m)?;
    }
    let zero_dispersion = total <= 1e-14 * dataset.scale();
    let entries = components
        .iter()
        .map(|c| DispersionEntry {
            order: c.order,
            cost: c.cost,
            fraction: if zero_dispersion { 1.0 } else { 1.0 - c.cost / total },
        })
        .collect();
    Ok(ExplainedDispersion {
        total,
        zero_dispersion,
        entries,
    })
}

/// Whether the orientation must flip so that projection times increase, on
/// average, with the largest eigenvalue of the data.
pub(crate) fn needs_reversal(dataset: &GaussianDataset, times: &[f64]) -> bool {
    let n = dataset.len();
    let largest: Vec<f64> = dataset
        .matrices()
        .iter()
        .map(|m| *m.eigenvalues().last().unwrap())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| largest[i].total_cmp(&largest[j]).then(i.cmp(&j)));
    let mut rank = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as f64;
    }
    let mean_rank = (n - 1) as f64 / 2.0;
    let mean_t = times.iter().sum::<f64>() / n as f64;
    let slope: f64 = (0..n).map(|i| (rank[i] - mean_rank) * (times[i] - mean_t)).sum();
    slope < -1e-12 * (1.0 + times.iter().map(|t| t.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests;
