//! Components of order k ≥ 2: segments through a fixed crossing point whose
//! direction is orthogonal to the lifted earlier directions.
//!
//! With anchor `P` (a representative of the crossing point) the segment is
//! `A = P R`, `X = K P R`, and the constraints read `⟨K, sym(F_ℓ Pᵀ)⟩ = 0`
//! for the frame vectors `F_ℓ` at `P`. For the second component `P` moves
//! along the first one, `P = A₁ + t* X₁`; higher orders keep the crossing of
//! the second.

use rand::Rng;
use rayon::prelude::*;

use super::align::align_all;
use super::first::{collect_runs, finalize, seeded_rng, Run, GLOBAL_SCAN_EVERY};
use super::{PrincipalComponent, SolverConfig};
use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::geodesic::GeodesicSegment;
use crate::linalg::{self, Mat};
use crate::rotation::procrustes_init;
use crate::spd::monge_with_roots;

const DIRECTION_STEPS: usize = 20;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;
const CROSSING_SCAN: usize = 16;
const CROSSING_GOLDEN_ITERS: usize = 60;

#[derive(Debug, Clone)]
struct Anchor {
    base: Mat,
    frame: Vec<Mat>,
    normals: Vec<Mat>,
}

impl Anchor {
    fn new(base: Mat, frame: Vec<Mat>) -> Self {
        let normals = frame.iter().map(|f| linalg::sym(&(f * base.transpose()))).collect();
        Anchor { base, frame, normals }
    }

    fn basis(&self) -> Vec<Mat> {
        linalg::weighted_sym_basis(&self.base, &self.normals)
    }

    /// Frobenius projection of `K` onto the constraint set, scaled so that
    /// `‖K P‖ = 1`.
    fn admissible(&self, k: &Mat) -> Option<Mat> {
        let mut k = linalg::sym(k);
        let mut ortho: Vec<Mat> = Vec::new();
        for n in &self.normals {
            let mut v = n.clone();
            for q in &ortho {
                v -= q * linalg::inner(&v, q);
            }
            let len = v.norm();
            if len > 1e-12 {
                ortho.push(v / len);
            }
        }
        for q in &ortho {
            k -= q * linalg::inner(&k, q);
        }
        let n = (&k * &self.base).norm();
        (n > 1e-12 && n.is_finite()).then(|| k / n)
    }
}

#[derive(Debug, Clone)]
struct Placement {
    anchor: Anchor,
    r: Mat,
    k: Mat,
    t_star: Option<f64>,
}

impl Placement {
    fn segment(&self, epsilon: f64) -> Option<GeodesicSegment> {
        let a = &self.anchor.base * &self.r;
        let x = &self.k * &a;
        GeodesicSegment::from_parts(a, x, epsilon).ok()
    }
}

fn cost_of(seg: &GeodesicSegment, targets: &[Mat]) -> f64 {
    targets.iter().map(|b| seg.residual_to(b)).sum()
}

/// Armijo descent over unit `K` in the constraint subspace, in coordinates of
/// a basis orthonormal for `‖K P‖ = ‖X‖`.
fn direction_step(p: &mut Placement, targets: &[Mat], epsilon: f64, step: &mut f64) {
    let basis = p.anchor.basis();
    let Some(mut seg) = p.segment(epsilon) else { return };
    let mut cost = cost_of(&seg, targets);
    let a = &p.anchor.base * &p.r;
    let lifted: Vec<Mat> = basis.iter().map(|e| e * &a).collect();
    let mut c: Vec<f64> = lifted.iter().map(|l| linalg::inner(seg.direction(), l)).collect();
    let combine = |c: &[f64]| {
        c.iter()
            .zip(&basis)
            .fold(Mat::zeros(a.nrows(), a.nrows()), |acc, (w, e)| acc + e * *w)
    };

    for _ in 0..DIRECTION_STEPS {
        if cost <= 0.0 {
            break;
        }
        let d = a.nrows();
        let mut g_x = Mat::zeros(d, d);
        for b in targets {
            let tau = seg.clip_time(seg.projection_time(b));
            g_x += (seg.lifted_point(tau) - b) * (2.0 * tau);
        }
        let mut g: Vec<f64> = lifted.iter().map(|l| linalg::inner(&g_x, l)).collect();
        let radial: f64 = g.iter().zip(&c).map(|(x, y)| x * y).sum();
        for (gi, ci) in g.iter_mut().zip(&c) {
            *gi -= radial * ci;
        }
        let slope: f64 = g.iter().map(|x| x * x).sum();
        if !(slope > 1e-30 * (1.0 + cost)) {
            break;
        }
        let first_try = (*step * 2.0).min(10.0);
        let mut alpha = first_try;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| ci - alpha * gi).collect();
            let norm = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                let trial: Vec<f64> = trial.iter().map(|x| x / norm).collect();
                let k = combine(&trial);
                if let Ok(seg2) = GeodesicSegment::from_parts(a.clone(), &k * &a, epsilon) {
                    let cost2 = cost_of(&seg2, targets);
                    if cost2 <= cost - ARMIJO_C * alpha * slope {
                        accepted = Some((trial, k, seg2, cost2));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((c2, k2, seg2, cost2)) = accepted else { break };
        *step = alpha;
        let decrease = cost - cost2;
        c = c2;
        p.k = k2;
        seg = seg2;
        cost = cost2;
        // a full step keeps growing; a shrunken one with no gain is a stall
        if alpha < first_try && decrease <= 1e-13 * cost {
            break;
        }
    }
}

/// Exact minimization over `R` with the projection times held fixed: a
/// stacked Procrustes problem.
fn rotation_block(p: &mut Placement, targets: &[Mat], epsilon: f64) {
    let Some(seg) = p.segment(epsilon) else { return };
    let before = cost_of(&seg, targets);
    let d = p.anchor.base.nrows();
    let n = targets.len();
    let z = &p.k * &p.anchor.base;
    let mut stacked_c = Mat::zeros(n * d, d);
    let mut stacked_b = Mat::zeros(n * d, d);
    for (i, b) in targets.iter().enumerate() {
        let tau = seg.clip_time(seg.projection_time(b));
        stacked_c
            .view_mut((i * d, 0), (d, d))
            .copy_from(&(&p.anchor.base + &z * tau));
        stacked_b.view_mut((i * d, 0), (d, d)).copy_from(b);
    }
    let Ok(r) = procrustes_init(&stacked_b, &stacked_c) else {
        return;
    };
    let trial = Placement {
        r: r.into_matrix(),
        ..p.clone()
    };
    if let Some(seg2) = trial.segment(epsilon) {
        if cost_of(&seg2, targets) < before {
            *p = trial;
        }
    }
}

/// Places the second component's anchor at time `t` on the first component.
fn second_anchor(first: &GeodesicSegment, t: f64) -> Anchor {
    Anchor::new(first.lifted_point(t), vec![first.direction().clone()])
}

fn moved_crossing(p: &Placement, first: &GeodesicSegment, t: f64) -> Option<Placement> {
    let anchor = second_anchor(first, t);
    let k = anchor.admissible(&p.k)?;
    Some(Placement {
        anchor,
        r: p.r.clone(),
        k,
        t_star: Some(t),
    })
}

/// Golden-section search for `t*` over `window`, holding `R` and the
/// rotations fixed and re-projecting `K` onto the moved constraint.
fn crossing_block(p: &mut Placement, first: &GeodesicSegment, window: (f64, f64), targets: &[Mat], epsilon: f64) {
    let Some(seg) = p.segment(epsilon) else { return };
    let before = cost_of(&seg, targets);
    let eval = |t: f64| {
        moved_crossing(p, first, t)
            .and_then(|q| q.segment(epsilon))
            .map(|s| cost_of(&s, targets))
            .unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = window;
    if !(hi > lo) {
        return;
    }
    let h = (hi - lo) / (CROSSING_SCAN - 1) as f64;
    let grid: Vec<f64> = (0..CROSSING_SCAN).map(|i| lo + h * i as f64).collect();
    let current = p.t_star.unwrap_or(lo);
    let mut best_t = current;
    let mut best_v = before;
    for &t in &grid {
        let v = eval(t);
        if v < best_v {
            best_t = t;
            best_v = v;
        }
    }
    let t = super::align::golden_section(eval, (best_t - h).max(lo), (best_t + h).min(hi), CROSSING_GOLDEN_ITERS);
    let v = eval(t);
    if v < best_v {
        best_t = t;
        best_v = v;
    }
    if best_v < before {
        if let Some(q) = moved_crossing(p, first, best_t) {
            *p = q;
        }
    }
}

/// Leading direction of the uncentered tangent PCA at the anchor, restricted
/// to the constraint subspace.
fn local_pca(anchor: &Anchor, dataset: &GaussianDataset) -> Option<Mat> {
    let basis = anchor.basis();
    if basis.is_empty() {
        return None;
    }
    let d = anchor.base.nrows();
    let s = &anchor.base * anchor.base.transpose();
    let root = linalg::sqrt_psd(&s);
    let inv_root = linalg::sym_apply(&s, |x| 1.0 / x.sqrt());
    let m = basis.len();
    let lifted: Vec<Mat> = basis.iter().map(|e| e * &anchor.base).collect();
    let mut scatter = Mat::zeros(m, m);
    for sigma in dataset.matrices() {
        let e = monge_with_roots(&root, &inv_root, sigma.matrix()) - Mat::identity(d, d);
        let le = e * &anchor.base;
        let c: Vec<f64> = lifted.iter().map(|l| linalg::inner(&le, l)).collect();
        for i in 0..m {
            for j in 0..m {
                scatter[(i, j)] += c[i] * c[j];
            }
        }
    }
    let (_, vectors) = linalg::sym_eigen(&scatter);
    let top = vectors.column(m - 1);
    let k = basis
        .iter()
        .enumerate()
        .fold(Mat::zeros(d, d), |acc, (i, e)| acc + e * top[i]);
    anchor.admissible(&k)
}

fn random_direction<R: Rng>(anchor: &Anchor, rng: &mut R) -> Option<Mat> {
    let basis = anchor.basis();
    let d = anchor.base.nrows();
    let w = linalg::gaussian_matrix(rng, basis.len(), 1);
    let k = basis
        .iter()
        .enumerate()
        .fold(Mat::zeros(d, d), |acc, (i, e)| acc + e * w[(i, 0)]);
    anchor.admissible(&k)
}

struct Outcome {
    run: Run,
    frame: Vec<Mat>,
    t_star: Option<f64>,
}

fn run_constrained(
    dataset: &GaussianDataset,
    mut p: Placement,
    first: Option<(&GeodesicSegment, (f64, f64))>,
    config: &SolverConfig,
) -> Result<Outcome> {
    let roots: Vec<Mat> = dataset.roots().iter().map(|r| r.matrix().clone()).collect();
    let seg = p.segment(config.epsilon).ok_or(GpcaError::DegenerateDirection)?;
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
        direction_step(&mut p, &targets, config.epsilon, &mut step);
        rotation_block(&mut p, &targets, config.epsilon);
        if let Some((first_seg, window)) = first {
            crossing_block(&mut p, first_seg, window, &targets, config.epsilon);
        }
        let seg = p.segment(config.epsilon).ok_or(GpcaError::DegenerateDirection)?;
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
    let a = &p.anchor.base * &p.r;
    Ok(Outcome {
        frame: p.anchor.frame.iter().map(|f| f * &p.r).collect(),
        t_star: p.t_star,
        run: Run {
            a,
            k: p.k,
            qs,
            cost,
            trace,
            converged,
            iterations,
        },
    })
}

fn assemble(
    dataset: &GaussianDataset,
    outcomes: Vec<Result<Outcome>>,
    order: usize,
    config: &SolverConfig,
    t_override: Option<f64>,
) -> Result<PrincipalComponent> {
    let mut extras = Vec::new();
    let mut results = Vec::new();
    for o in outcomes {
        match o {
            Ok(o) => {
                extras.push((o.frame, o.t_star));
                results.push(Ok(o.run));
            }
            Err(e) => results.push(Err(e)),
        }
    }
    let runs = collect_runs(results)?;
    let best = (0..runs.len())
        .min_by(|&i, &j| runs[i].cost.total_cmp(&runs[j].cost).then(i.cmp(&j)))
        .ok_or_else(|| GpcaError::Numeric("no restart produced a segment".into()))?;
    let (frame, t_star) = extras.swap_remove(best);
    finalize(dataset, runs, order, config, frame, t_override.or(t_star))
}

/// Second component: a geodesic crossing the first at `π(A₁ + t* X₁)` with
/// `⟨X₂, X₁ R*⟩ = 0`, fitted by alternating over the rotations, `K₂`, `R*`
/// and `t*`.
pub fn fit_second_component(
    dataset: &GaussianDataset,
    first: &PrincipalComponent,
    config: &SolverConfig,
) -> Result<PrincipalComponent> {
    config.validate()?;
    if first.segment.dim() != dataset.dim() || first.projection_times.len() != dataset.len() {
        return Err(GpcaError::InvalidArgument(
            "first component was fitted on a different dataset".into(),
        ));
    }
    let seg1 = &first.segment;
    let (mut lo, mut hi) = first
        .projection_times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let pad = 0.1 * (hi - lo) + 1e-9;
    lo = seg1.clip_time(lo - pad);
    hi = seg1.clip_time(hi + pad);
    let d = dataset.dim();
    let identity = Mat::identity(d, d);

    // deterministic start: best crossing among a few quantiles of the first
    // component's projection times, each with its local tangent direction
    let mut sorted = first.projection_times.clone();
    sorted.sort_by(f64::total_cmp);
    let roots: Vec<Mat> = dataset.roots().iter().map(|r| r.matrix().clone()).collect();
    let mut best_start: Option<(f64, Placement)> = None;
    for q in [0.5, 0.25, 0.75, 0.1, 0.9] {
        let t = sorted[((sorted.len() - 1) as f64 * q).round() as usize];
        let anchor = second_anchor(seg1, t);
        if anchor.basis().is_empty() {
            return Err(GpcaError::NoRemainingDirections { order: 2 });
        }
        let Some(k) = local_pca(&anchor, dataset) else { continue };
        let p = Placement {
            anchor,
            r: identity.clone(),
            k,
            t_star: Some(t),
        };
        let Some(seg) = p.segment(config.epsilon) else { continue };
        let cost: f64 = align_all(&seg, &roots, None, true, &config.inner)
            .iter()
            .map(|f| f.value)
            .sum();
        if best_start.as_ref().is_none_or(|(c, _)| cost < *c) {
            best_start = Some((cost, p));
        }
    }
    let (_, start0) = best_start.ok_or(GpcaError::DegenerateDirection)?;

    let starts: Vec<Placement> = (0..config.restarts)
        .map(|i| {
            if i == 0 {
                return start0.clone();
            }
            let mut rng = seeded_rng(config.seed ^ 0x5eed_0002, i);
            let t = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let anchor = second_anchor(seg1, t);
            let k = if i % 2 == 0 {
                local_pca(&anchor, dataset)
            } else {
                random_direction(&anchor, &mut rng)
            };
            match k {
                Some(k) => Placement {
                    anchor,
                    r: identity.clone(),
                    k,
                    t_star: Some(t),
                },
                None => start0.clone(),
            }
        })
        .collect();
    let outcomes: Vec<Result<Outcome>> = starts
        .into_par_iter()
        .map(|p| run_constrained(dataset, p, Some((seg1, (lo, hi))), config))
        .collect();
    assemble(dataset, outcomes, 2, config, None)
}

/// Component of order `k = previous.len() + 1 ≥ 3` through the crossing of
/// the second, orthogonal to every lifted earlier direction.
pub fn fit_higher_component(
    dataset: &GaussianDataset,
    previous: &[PrincipalComponent],
    config: &SolverConfig,
) -> Result<PrincipalComponent> {
    config.validate()?;
    let order = previous.len() + 1;
    if previous.len() < 2 {
        return Err(GpcaError::InvalidArgument(format!(
            "higher components need the first two, got {}",
            previous.len()
        )));
    }
    let last = previous.last().unwrap();
    if last.segment.dim() != dataset.dim() || last.projection_times.len() != dataset.len() {
        return Err(GpcaError::InvalidArgument(
            "previous components were fitted on a different dataset".into(),
        ));
    }
    let mut frame: Vec<Mat> = last.frame.iter().map(|f| f.matrix().clone()).collect();
    frame.push(last.segment.direction().clone());
    let anchor = Anchor::new(last.segment.base().clone(), frame);
    if anchor.basis().is_empty() {
        return Err(GpcaError::NoRemainingDirections { order });
    }
    let d = dataset.dim();
    let starts: Vec<Placement> = (0..config.restarts)
        .filter_map(|i| {
            let k = if i == 0 {
                local_pca(&anchor, dataset)
            } else {
                let mut rng = seeded_rng(config.seed ^ (0x5eed_0000 + order as u64), i);
                random_direction(&anchor, &mut rng)
            };
            k.map(|k| Placement {
                anchor: anchor.clone(),
                r: Mat::identity(d, d),
                k,
                t_star: None,
            })
        })
        .collect();
    if starts.is_empty() {
        return Err(GpcaError::NoRemainingDirections { order });
    }
    let outcomes: Vec<Result<Outcome>> = starts
        .into_par_iter()
        .map(|p| run_constrained(dataset, p, None, config))
        .collect();
    assemble(dataset, outcomes, order, config, previous[1].intersection_time)
}
