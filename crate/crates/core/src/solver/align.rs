//! Rotation step: for a fixed segment, the best representative `Σ_i^{1/2} Q_i`
//! of every datum.
//!
//! For fixed `t` the optimal `Q` is a Procrustes solution, so the reduced
//! per-datum cost `h(t) = min_Q ‖A + tX − R Q‖²` is a scalar function on the
//! interval. Its optimum lies in `|t| ≤ 2(‖A‖ + ‖R‖)`.

use crate::geodesic::GeodesicSegment;
use crate::linalg::{self, Mat};
use crate::rotation::{rotation_descent, RotationDescentConfig, RotationObjective};
use crate::spd::Rotation;

const SCAN_POINTS: usize = 24;
const GOLDEN_ITERS: usize = 60;
const ALTERNATION_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub(crate) struct DatumFit {
    pub q: Mat,
    /// Clipped projection time of `R Q`.
    pub t: f64,
    pub value: f64,
}

pub(crate) fn evaluate(seg: &GeodesicSegment, r: &Mat, q: &Mat) -> DatumFit {
    let b = r * q;
    let t = seg.clip_time(seg.projection_time(&b));
    let value = (seg.lifted_point(t) - b).norm_squared();
    DatumFit { q: q.clone(), t, value }
}

fn procrustes_at(seg: &GeodesicSegment, r: &Mat, t: f64) -> Mat {
    linalg::nearest_rotation(&(r.transpose() * seg.lifted_point(t)))
}

fn reduced_cost(seg: &GeodesicSegment, r: &Mat, t: f64) -> f64 {
    let p = seg.lifted_point(t);
    let q = linalg::nearest_rotation(&(r.transpose() * &p));
    (p - r * q).norm_squared()
}

/// Fixed-point alternation `t ← clip(proj(RQ))`, `Q ← procrustes(t)`; each
/// half-step is an exact minimization, so values never increase.
fn alternate(seg: &GeodesicSegment, r: &Mat, start: DatumFit) -> DatumFit {
    let mut best = start;
    for _ in 0..ALTERNATION_ITERS {
        let q = procrustes_at(seg, r, best.t);
        let next = evaluate(seg, r, &q);
        if next.value < best.value - 1e-15 * (1.0 + best.value) {
            best = next;
        } else {
            if next.value < best.value {
                best = next;
            }
            break;
        }
    }
    best
}

fn scan(seg: &GeodesicSegment, r: &Mat) -> DatumFit {
    let reach = 2.0 * (seg.base().norm() + r.norm()) + 1.0;
    let lo = seg.t_min().max(-reach);
    let hi = seg.t_max().min(reach);
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&t| reduced_cost(seg, r, t)).collect();
    let best = (0..SCAN_POINTS)
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap();
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(SCAN_POINTS - 1)];
    let t = golden_section(|t| reduced_cost(seg, r, t), a, b, GOLDEN_ITERS);
    let t = if reduced_cost(seg, r, t) <= values[best] {
        t
    } else {
        grid[best]
    };
    evaluate(seg, r, &procrustes_at(seg, r, t))
}

/// Minimizer of a unimodal function on `[a, b]`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// `g(Q) = ‖A + clip(t(Q)) X − R Q‖²`; by the envelope argument its Euclidean
/// gradient is `−2 Rᵀ r` whether or not the time is clipped.
struct DatumObjective<'a> {
    seg: &'a GeodesicSegment,
    r: &'a Mat,
}

impl RotationObjective for DatumObjective<'_> {
    fn value(&self, q: &Mat) -> f64 {
        evaluate(self.seg, self.r, q).value
    }

    fn euclidean_gradient(&self, q: &Mat) -> Option<Mat> {
        let b = self.r * q;
        let t = self.seg.clip_time(self.seg.projection_time(&b));
        let residual = self.seg.lifted_point(t) - b;
        Some(self.r.transpose() * residual * -2.0)
    }
}

/// Never returns a worse value than `current`.
pub(crate) fn align_datum(
    seg: &GeodesicSegment,
    r: &Mat,
    current: Option<&Mat>,
    global: bool,
    inner: &RotationDescentConfig,
) -> DatumFit {
    let mut candidates = Vec::with_capacity(2);
    if let Some(q) = current {
        candidates.push(alternate(seg, r, evaluate(seg, r, q)));
    }
    if global || current.is_none() {
        candidates.push(alternate(seg, r, scan(seg, r)));
    }
    let best = candidates
        .into_iter()
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("at least one candidate");
    let objective = DatumObjective { seg, r };
    let polished = rotation_descent(&objective, &Rotation::from_trusted(best.q.clone()), inner);
    let polished = evaluate(seg, r, polished.rotation.matrix());
    if polished.value < best.value {
        polished
    } else {
        best
    }
}

pub(crate) fn align_all(
    seg: &GeodesicSegment,
    roots: &[Mat],
    current: Option<&[Mat]>,
    global: bool,
    inner: &RotationDescentConfig,
) -> Vec<DatumFit> {
    roots
        .iter()
        .enumerate()
        .map(|(i, r)| align_datum(seg, r, current.map(|qs| &qs[i]), global, inner))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::{bures_wasserstein_sq, sample_spd, spd_sqrt, SpdMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let t = golden_section(|t| (t - 0.3).powi(2), -2.0, 5.0, 200);
        assert!((t - 0.3).abs() < 1e-7);
    }

    #[test]
    fn datum_on_segment_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = spd_sqrt(&sample_spd(&mut rng, 3, 0.5)).into_matrix();
        let k = linalg::random_symmetric(&mut rng, 3) * 0.2;
        let seg = GeodesicSegment::from_parts(a.clone(), &k * &a, 1e-3).unwrap();
        let t = 0.4f64.clamp(seg.t_min(), seg.t_max());
        let p = seg.lifted_point(t);
        let q_true = linalg::random_rotation(&mut rng, 3);
        let target = SpdMatrix::new(linalg::sym(&(&p * p.transpose()))).unwrap();
        let r = spd_sqrt(&target).into_matrix();
        let fit = align_datum(&seg, &r, Some(&q_true), true, &RotationDescentConfig::default());
        assert!(fit.value < 1e-12, "{}", fit.value);
        assert!((fit.t - t).abs() < 1e-6);
    }

    #[test]
    fn reduced_cost_is_fiber_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = spd_sqrt(&sample_spd(&mut rng, 2, 0.5)).into_matrix();
        let k = linalg::random_symmetric(&mut rng, 2);
        let seg = GeodesicSegment::from_parts(a.clone(), k * &a, 1e-3).unwrap();
        let s = sample_spd(&mut rng, 2, 0.5);
        let r = spd_sqrt(&s).into_matrix();
        let p = seg.lifted_point(0.0);
        let sp = SpdMatrix::new(linalg::sym(&(&p * p.transpose()))).unwrap();
        assert!((reduced_cost(&seg, &r, 0.0) - bures_wasserstein_sq(&sp, &s).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn alignment_never_worsens() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = spd_sqrt(&sample_spd(&mut rng, 3, 0.5)).into_matrix();
        let k = linalg::random_symmetric(&mut rng, 3);
        let seg = GeodesicSegment::from_parts(a.clone(), &k * &a, 1e-3).unwrap();
        for _ in 0..20 {
            let r = spd_sqrt(&sample_spd(&mut rng, 3, 0.8)).into_matrix();
            let q0 = linalg::random_rotation(&mut rng, 3);
            let before = evaluate(&seg, &r, &q0).value;
            let fit = align_datum(&seg, &r, Some(&q0), false, &RotationDescentConfig::default());
            assert!(fit.value <= before);
            // a rotation-grid search cannot beat the scan by more than noise
            let global = align_datum(&seg, &r, None, true, &RotationDescentConfig::default());
            for _ in 0..200 {
                let q = linalg::random_rotation(&mut rng, 3);
                assert!(global.value <= evaluate(&seg, &r, &q).value + 1e-9);
            }
        }
    }
}
