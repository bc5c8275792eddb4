//! First component: alternating minimization over the rotations and the
//! segment `(A, X = K A / ‖K A‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::align::{align_all, evaluate, DatumFit};
use super::{needs_reversal, PrincipalComponent, SolverConfig};
use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::geodesic::GeodesicSegment;
use crate::linalg::{self, Mat};
use crate::spd::{monge_with_roots, Rotation};
use crate::tpca::{fit_tpca, tpca_component_as_segment};

/// Every this many outer iterations the rotation step also runs the global
/// time scan, not just the local alternation.
pub(crate) const GLOBAL_SCAN_EVERY: usize = 10;
const SEGMENT_STEPS: usize = 20;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct Run {
    pub a: Mat,
    pub k: Mat,
    pub qs: Vec<Mat>,
    pub cost: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn seeded_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// `K` with `X = K A`, for horizontal `X`.
fn k_from(a: &Mat, x: &Mat) -> Result<Mat> {
    let inv = a.clone().try_inverse().ok_or(GpcaError::Singular { smallest: 0.0 })?;
    Ok(linalg::sym(&(x * inv)))
}

fn line(a: &Mat, k: &Mat, epsilon: f64) -> Option<GeodesicSegment> {
    GeodesicSegment::from_parts(a.clone(), k * a, epsilon).ok()
}

fn line_cost(seg: &GeodesicSegment, targets: &[Mat]) -> f64 {
    targets.iter().map(|b| seg.residual_to(b)).sum()
}

/// Gradient of `Σ_i ‖A + τ_i X − B_i‖²` in `(A, K)` with `X = KA/‖KA‖`,
/// clipped times held fixed.
pub(crate) fn line_gradient(seg: &GeodesicSegment, a: &Mat, k: &Mat, targets: &[Mat]) -> (Mat, Mat) {
    let d = a.nrows();
    let x = seg.direction();
    let y_norm = (k * a).norm();
    let mut g_a = Mat::zeros(d, d);
    let mut g_x = Mat::zeros(d, d);
    for b in targets {
        let tau = seg.clip_time(seg.projection_time(b));
        let r = seg.lifted_point(tau) - b;
        g_a += &r * 2.0;
        g_x += &r * (2.0 * tau);
    }
    let g_y = (&g_x - x * linalg::inner(x, &g_x)) / y_norm;
    let g_k = linalg::sym(&(&g_y * a.transpose()));
    g_a += k * &g_y;
    (g_a, g_k)
}

/// Moves `A` along the line to the mean projection time. The projected
/// curve and the cost are unchanged; only the conditioning improves.
fn recenter(a: &Mat, k: &Mat, seg: &GeodesicSegment, targets: &[Mat]) -> Option<(Mat, Mat)> {
    let s = targets
        .iter()
        .map(|b| seg.clip_time(seg.projection_time(b)))
        .sum::<f64>()
        / targets.len() as f64;
    if !(s.abs() > 0.0) {
        return None;
    }
    let d = a.nrows();
    let shift = Mat::identity(d, d) + k * s;
    let inv = shift.try_inverse()?;
    Some((seg.lifted_point(s), linalg::sym(&(k * inv))))
}

/// Armijo descent on `(A, K)` with the targets `B_i = Σ_i^{1/2} Q_i` fixed.
/// Returns the new `(A, K)` and cost, never worse than the input.
pub(crate) fn segment_step(a: &Mat, k: &Mat, targets: &[Mat], epsilon: f64, step: &mut f64) -> Option<(Mat, Mat, f64)> {
    let mut seg = line(a, k, epsilon)?;
    let mut a = a.clone();
    let mut k = k.clone();
    let mut cost = line_cost(&seg, targets);

    if let Some((a2, k2)) = recenter(&a, &k, &seg, targets) {
        if let Some(seg2) = line(&a2, &k2, epsilon) {
            let cost2 = line_cost(&seg2, targets);
            if cost2 <= cost {
                a = a2;
                k = k2;
                seg = seg2;
                cost = cost2;
            }
        }
    }

    for _ in 0..SEGMENT_STEPS {
        if cost <= 0.0 {
            break;
        }
        let (g_a, g_k) = line_gradient(&seg, &a, &k, targets);
        let slope = g_a.norm_squared() + g_k.norm_squared();
        if !(slope > 1e-30 * (1.0 + cost)) {
            break;
        }
        let first_try = (*step * 2.0).min(1e6);
        let mut alpha = first_try;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let a2 = &a - &g_a * alpha;
            let mut k2 = &k - &g_k * alpha;
            let n = (&k2 * &a2).norm();
            if n > 0.0 && n.is_finite() {
                k2 /= n;
                if let Some(seg2) = line(&a2, &k2, epsilon) {
                    let cost2 = line_cost(&seg2, targets);
                    if cost2 <= cost - ARMIJO_C * alpha * slope {
                        accepted = Some((a2, k2, seg2, cost2));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((a2, k2, seg2, cost2)) = accepted else { break };
        *step = alpha;
        let decrease = cost - cost2;
        a = a2;
        k = k2;
        seg = seg2;
        cost = cost2;
        // a full step keeps growing; a shrunken one with no gain is a stall
        if alpha < first_try && decrease <= 1e-13 * cost {
            break;
        }
    }
    Some((a, k, cost))
}

/// One alternating-minimization run from a starting segment.
pub(crate) fn run_from(dataset: &GaussianDataset, start: &GeodesicSegment, config: &SolverConfig) -> Result<Run> {
    let roots: Vec<Mat> = dataset.roots().iter().map(|r| r.matrix().clone()).collect();
    let mut a = start.base().clone();
    let mut k = k_from(&a, start.direction())?;
    let mut seg = start.clone();
    let fits = align_all(&seg, &roots, None, true, &config.inner);
    let mut qs: Vec<Mat> = fits.iter().map(|f| f.q.clone()).collect();
    let mut cost: f64 = fits.iter().map(|f| f.value).sum();
    let mut trace = vec![cost];
    let floor = 1e-15 * dataset.scale();
    let mut converged = cost <= floor;
    let mut iterations = 0;
    let mut step = 1e-2;
    let mut force_global = false;

    while !converged && iterations < config.outer_max_iters {
        iterations += 1;
        let targets: Vec<Mat> = roots.iter().zip(&qs).map(|(r, q)| r * q).collect();
        if let Some((a2, k2, _)) = segment_step(&a, &k, &targets, config.epsilon, &mut step) {
            a = a2;
            k = k2;
        }
        seg = line(&a, &k, config.epsilon).ok_or_else(|| GpcaError::Numeric("segment left GL(d)".into()))?;
        let global = force_global || iterations % GLOBAL_SCAN_EVERY == 0;
        let fits = align_all(&seg, &roots, Some(&qs), global, &config.inner);
        qs = fits.iter().map(|f| f.q.clone()).collect();
        let next: f64 = fits.iter().map(|f| f.value).sum();
        let decrease = cost - next;
        cost = next;
        trace.push(cost);
        if cost <= floor {
            converged = true;
        } else if decrease <= config.outer_tol * (cost + decrease) {
            // a stall only counts once the global time scan has also failed
            // to improve any datum
            converged = global;
            force_global = !global;
        } else {
            force_global = false;
        }
    }
    Ok(Run {
        a,
        k,
        qs,
        cost,
        trace,
        converged,
        iterations,
    })
}

fn unit(m: Mat) -> Option<Mat> {
    let n = m.norm();
    (n > 1e-12 && n.is_finite()).then(|| m / n)
}

/// Starting segment of restart `index ≥ 1`: odd restarts use the geodesic
/// through two random data, even ones perturb the tangent-PCA start.
fn perturbed_start(
    dataset: &GaussianDataset,
    tpca: &GeodesicSegment,
    spread: f64,
    index: usize,
    config: &SolverConfig,
) -> Option<GeodesicSegment> {
    let mut rng = seeded_rng(config.seed, index);
    let d = dataset.dim();
    let n = dataset.len();
    if index % 2 == 1 {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let ri = dataset.root(i);
        let inv = linalg::sym_apply(dataset.matrices()[i].matrix(), |x| 1.0 / x.sqrt());
        let t = monge_with_roots(ri, &inv, dataset.matrices()[j].matrix());
        if let Some(x) = unit((t - Mat::identity(d, d)) * ri) {
            return GeodesicSegment::from_parts(ri.clone(), x, config.epsilon).ok();
        }
    }
    let s = tpca.clip_time(rng.random_range(-0.5..0.5) * spread);
    let a = tpca.lifted_point(s);
    let noise = linalg::random_symmetric(&mut rng, d) * &a;
    let sigma = rng.random_range(0.3..1.0);
    let x = unit(tpca.direction() + unit(noise)? * sigma)?;
    GeodesicSegment::from_parts(a, x, config.epsilon).ok()
}

pub(crate) fn finalize(
    dataset: &GaussianDataset,
    runs: Vec<Run>,
    order: usize,
    config: &SolverConfig,
    frame: Vec<Mat>,
    intersection_time: Option<f64>,
) -> Result<PrincipalComponent> {
    let best_restart = (0..runs.len())
        .min_by(|&i, &j| runs[i].cost.total_cmp(&runs[j].cost).then(i.cmp(&j)))
        .ok_or_else(|| GpcaError::Numeric("no restart produced a segment".into()))?;
    let converged = runs.iter().any(|r| r.converged);
    let best = &runs[best_restart];
    let mut seg =
        line(&best.a, &best.k, config.epsilon).ok_or_else(|| GpcaError::Numeric("degenerate final segment".into()))?;
    let mut fits: Vec<DatumFit> = best
        .qs
        .iter()
        .enumerate()
        .map(|(i, q)| evaluate(&seg, dataset.root(i), q))
        .collect();
    let mut times: Vec<f64> = fits.iter().map(|f| f.t).collect();
    if needs_reversal(dataset, &times) {
        seg = seg.reversed();
        fits = best
            .qs
            .iter()
            .enumerate()
            .map(|(i, q)| evaluate(&seg, dataset.root(i), q))
            .collect();
        times = fits.iter().map(|f| f.t).collect();
    }
    Ok(PrincipalComponent {
        order,
        cost: fits.iter().map(|f| f.value).sum(),
        rotations: fits.into_iter().map(|f| Rotation::from_trusted(f.q)).collect(),
        projection_times: times,
        segment: seg,
        intersection_time,
        frame: frame.into_iter().map(crate::spd::TangentMatrix).collect(),
        converged,
        iterations: best.iterations,
        restart_costs: runs.iter().map(|r| r.cost).collect(),
        restart_traces: runs.into_iter().map(|r| r.trace).collect(),
        best_restart,
    })
}

/// Best of `config.restarts` alternating-minimization runs. Restart 0 starts
/// from the lifted first tangent-PCA direction, so the result never costs
/// more than that geodesic.
pub fn fit_first_component(dataset: &GaussianDataset, config: &SolverConfig) -> Result<PrincipalComponent> {
    config.validate()?;
    let tpca = fit_tpca(dataset, 1)?;
    let tpca_seg = tpca_component_as_segment(&tpca, 0, config.epsilon)?;
    let spread = tpca.eigenvalues[0].sqrt();
    let starts: Vec<GeodesicSegment> = (0..config.restarts)
        .map(|i| {
            if i == 0 {
                tpca_seg.clone()
            } else {
                perturbed_start(dataset, &tpca_seg, spread, i, config).unwrap_or_else(|| tpca_seg.clone())
            }
        })
        .collect();
    let results: Vec<Result<Run>> = starts.par_iter().map(|s| run_from(dataset, s, config)).collect();
    collect_runs(results).and_then(|runs| finalize(dataset, runs, 1, config, Vec::new(), None))
}

pub(crate) fn collect_runs(results: Vec<Result<Run>>) -> Result<Vec<Run>> {
    let mut first_err = None;
    let mut runs = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (runs.is_empty(), first_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(runs),
    }
}

/// A single run from a given unit horizontal starting segment.
pub fn fit_first_component_from(
    dataset: &GaussianDataset,
    start: &GeodesicSegment,
    config: &SolverConfig,
) -> Result<PrincipalComponent> {
    config.validate()?;
    if start.dim() != dataset.dim() {
        return Err(GpcaError::DimensionMismatch {
            expected: dataset.dim(),
            got: start.dim(),
        });
    }
    let run = run_from(dataset, start, config)?;
    finalize(dataset, vec![run], 1, config, Vec::new(), None)
}

/// Optimal rotations and cost for a fixed segment, with no descent on the
/// segment itself.
pub fn component_for_segment(
    dataset: &GaussianDataset,
    segment: &GeodesicSegment,
    config: &SolverConfig,
) -> Result<PrincipalComponent> {
    config.validate()?;
    if segment.dim() != dataset.dim() {
        return Err(GpcaError::DimensionMismatch {
            expected: dataset.dim(),
            got: segment.dim(),
        });
    }
    let roots: Vec<Mat> = dataset.roots().iter().map(|r| r.matrix().clone()).collect();
    let fits = align_all(segment, &roots, None, true, &config.inner);
    let cost: f64 = fits.iter().map(|f| f.value).sum();
    Ok(PrincipalComponent {
        order: 1,
        segment: segment.clone(),
        projection_times: fits.iter().map(|f| f.t).collect(),
        rotations: fits.into_iter().map(|f| Rotation::from_trusted(f.q)).collect(),
        cost,
        intersection_time: None,
        frame: Vec::new(),
        converged: true,
        iterations: 0,
        restart_traces: vec![vec![cost]],
        restart_costs: vec![cost],
        best_restart: 0,
    })
}
