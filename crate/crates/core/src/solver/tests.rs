use super::*;
use crate::experiments::{circle_parameters, gen_circle, gen_grid};
use crate::linalg;
use crate::spd::{spd_sqrt, SpdMatrix};
use crate::tpca::{fit_tpca, tpca_component_as_segment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick() -> SolverConfig {
    SolverConfig {
        restarts: 3,
        ..SolverConfig::default()
    }
}

fn diagonal_dataset(points: &[(f64, f64)]) -> GaussianDataset {
    GaussianDataset::new(
        points
            .iter()
            .map(|&(a, b)| SpdMatrix::diagonal(&[a * a, b * b]).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Orthogonal-distance regression cost of a 2-D point cloud: `n` times the
/// smaller eigenvalue of the covariance.
fn odr_cost(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (ma, mb) = points
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let mut c = Mat::zeros(2, 2);
    for &(a, b) in points {
        let v = nalgebra::dvector![a - ma, b - mb];
        c += &v * v.transpose();
    }
    let (vals, _) = linalg::sym_eigen(&c);
    (vals[0], vals[1])
}

fn assert_monotone(c: &PrincipalComponent) {
    for trace in &c.restart_traces {
        assert!(
            trace.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "trace increases: {trace:?}"
        );
    }
}

fn assert_invariants(dataset: &GaussianDataset, c: &PrincipalComponent) {
    let recomputed: f64 = (0..dataset.len())
        .map(|i| c.segment.residual(&dataset.matrices()[i], &c.rotations[i]))
        .sum();
    assert!((recomputed - c.cost).abs() < 1e-9 * (1.0 + c.cost));
    for &t in &c.projection_times {
        assert!(c.segment.contains(t));
    }
    assert!(c.orthogonality_residual() <= 1e-6);
    for f in &c.frame {
        let (_, rel) = crate::spd::horizontality_residual(c.segment.base(), f.matrix());
        assert!(rel <= 1e-6);
    }
    assert_monotone(c);
}

#[test]
fn objective_vanishes_on_the_segment() {
    let a = Mat::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.0]);
    let k = Mat::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.2]);
    let x = &k * &a / (&k * &a).norm();
    let seg = GeodesicSegment::from_parts(a.clone(), x.clone(), 1e-3).unwrap();
    let on: Vec<SpdMatrix> = [-0.3, 0.0, 0.5].iter().map(|&t| seg.eval(t).unwrap()).collect();
    let ds = GaussianDataset::new(on.clone()).unwrap();
    let rotations: Vec<Rotation> = on
        .iter()
        .zip([-0.3, 0.0, 0.5])
        .map(|(s, t)| Rotation::nearest(&(spd_sqrt(s).matrix().transpose() * seg.lifted_point(t))))
        .collect();
    let f = objective_f(
        &FiberRepresentative::new(a).unwrap(),
        &TangentMatrix(x),
        &rotations,
        &ds,
        1e-3,
    )
    .unwrap();
    assert!(f < 1e-20, "{f}");
}

#[test]
fn objective_rejects_bad_inputs() {
    let ds = diagonal_dataset(&[(1.0, 1.0), (2.0, 1.0)]);
    let a = FiberRepresentative::new(Mat::identity(2, 2)).unwrap();
    let x = TangentMatrix(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let q = vec![Rotation::identity(2); 2];
    assert!(objective_f(&a, &x, &q[..1], &ds, 1e-3).is_err());
    let skew = TangentMatrix(Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) / 2f64.sqrt());
    assert!(matches!(
        objective_f(&a, &skew, &q, &ds, 1e-3),
        Err(GpcaError::NotHorizontal { .. })
    ));
    let long = TangentMatrix(Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    assert!(objective_f(&a, &long, &q, &ds, 1e-3).is_err());
}

#[test]
fn diagonal_objective_is_euclidean_residual() {
    let points = [(1.0, 1.1), (1.3, 0.9), (1.6, 1.4), (1.2, 1.2)];
    let ds = diagonal_dataset(&points);
    // line a = 1.3 + t/√2, b = 1.1 + t/√2 in (a, b) coordinates
    let a = Mat::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 1.1]);
    let x = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]) / 2f64.sqrt();
    let q = vec![Rotation::identity(2); points.len()];
    let f = objective_f(&FiberRepresentative::new(a).unwrap(), &TangentMatrix(x), &q, &ds, 1e-3).unwrap();
    let expected: f64 = points.iter().map(|&(p, r)| ((p - 1.3) - (r - 1.1)).powi(2) / 2.0).sum();
    assert!((f - expected).abs() < 1e-12);
}

#[test]
fn collinear_data_is_fitted_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = spd_sqrt(&crate::spd::sample_spd(&mut rng, 2, 0.3)).into_matrix();
    let k = linalg::random_symmetric(&mut rng, 2);
    let seg = GeodesicSegment::from_parts(a.clone(), &k * &a, 1e-3).unwrap();
    let window = seg.finite_window(-1.0, 1.0);
    let times: Vec<f64> = (0..6)
        .map(|i| window.0 * 0.5 + (window.1 * 0.5 - window.0 * 0.5) * i as f64 / 5.0)
        .collect();
    let ds = GaussianDataset::new(times.iter().map(|&t| seg.eval(t).unwrap()).collect()).unwrap();
    let c = fit_first_component(&ds, &quick()).unwrap();
    assert!(c.cost < 1e-9, "cost {}", c.cost);
    // projection times are an affine image of the generating times
    let (t0, t1) = (c.projection_times[0], c.projection_times[5]);
    let scale = (t1 - t0) / (times[5] - times[0]);
    assert!((scale.abs() - 1.0).abs() < 1e-4);
    for (s, t) in times.iter().zip(&c.projection_times) {
        assert!((t0 + scale * (s - times[0]) - t).abs() < 1e-4);
    }
    assert_invariants(&ds, &c);
}

#[test]
fn two_points_give_the_connecting_geodesic() {
    let ds = GaussianDataset::new(vec![
        SpdMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap(),
        SpdMatrix::from_row_slice(2, &[1.0, -0.2, -0.2, 0.8]).unwrap(),
    ])
    .unwrap();
    let c = fit_first_component(&ds, &quick()).unwrap();
    assert!(c.cost < 1e-10);
    assert!(GaussianDataset::new(vec![SpdMatrix::identity(2)]).is_err());
}

#[test]
fn grid_component_is_the_flat_pca_line() {
    let ds = gen_grid((1.0, 3.0), (1.0, 2.0), 5, 5).unwrap();
    let points: Vec<(f64, f64)> = ds
        .matrices()
        .iter()
        .map(|m| (m.matrix()[(0, 0)].sqrt(), m.matrix()[(1, 1)].sqrt()))
        .collect();
    let (small, large) = odr_cost(&points);
    let comps = fit_components(&ds, 2, &quick()).unwrap();
    assert!((comps[0].cost - small).abs() < 1e-6, "{} vs {small}", comps[0].cost);
    // straight line along a: the direction is diagonal, with no b part
    let x = comps[0].segment.direction();
    let a = comps[0].segment.base();
    assert!(x[(0, 1)].abs() < 1e-6 && x[(1, 0)].abs() < 1e-6 && a[(0, 1)].abs() < 1e-6);
    assert!(x[(1, 1)].abs() < 1e-6 && x[(0, 0)].abs() > 0.999);
    // second captures b
    assert!((comps[1].cost - large).abs() < 1e-6);
    let x2 = comps[1].segment.direction();
    let aligned = comps[1].segment.base() * comps[1].rotations[0].matrix().transpose();
    assert!(aligned[(0, 1)].abs() < 1e-6);
    let x2 = x2 * comps[1].rotations[0].matrix().transpose();
    assert!(x2[(0, 0)].abs() < 1e-6 && x2[(1, 1)].abs() > 0.999);
    for c in &comps {
        assert_invariants(&ds, c);
    }
    let disp = explained_dispersion(&ds, &comps).unwrap();
    assert!(!disp.zero_dispersion);
    assert!((disp.entries[0].fraction - large / (small + large)).abs() < 1e-6);
    assert!((disp.entries[1].fraction - small / (small + large)).abs() < 1e-6);
}

#[test]
fn flat_cost_matches_odr_on_random_diagonal_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    use rand::Rng;
    for _ in 0..3 {
        let points: Vec<(f64, f64)> = (0..12)
            .map(|_| (rng.random_range(1.0..2.0), rng.random_range(1.0..2.0)))
            .collect();
        let ds = diagonal_dataset(&points);
        let c = fit_first_component(&ds, &quick()).unwrap();
        let (small, _) = odr_cost(&points);
        assert!((c.cost - small).abs() < 1e-6, "{} vs {small}", c.cost);
    }
}

#[test]
fn circle_component_beats_tangent_pca() {
    let (a, b) = circle_parameters(0.8).unwrap();
    let ds = gen_circle(a, b, 20, 0.05).unwrap();
    let tpca = fit_tpca(&ds, 1).unwrap();
    let seg = tpca_component_as_segment(&tpca, 0, 1e-3).unwrap();
    let tpca_cost = component_for_segment(&ds, &seg, &quick()).unwrap().cost;
    let c = fit_first_component(&ds, &SolverConfig::default()).unwrap();
    assert!(c.cost < 0.99 * tpca_cost, "{} vs {tpca_cost}", c.cost);
    assert_invariants(&ds, &c);
}

#[test]
fn tangent_seeded_restart_never_loses() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for d in [2, 3] {
        let ds = GaussianDataset::new((0..10).map(|_| crate::spd::sample_spd(&mut rng, d, 0.6)).collect()).unwrap();
        let tpca = fit_tpca(&ds, 1).unwrap();
        let seg = tpca_component_as_segment(&tpca, 0, 1e-3).unwrap();
        let tpca_cost = component_for_segment(&ds, &seg, &quick()).unwrap().cost;
        let c = fit_first_component(&ds, &quick()).unwrap();
        assert!(c.cost <= tpca_cost + 1e-9);
        assert_invariants(&ds, &c);
    }
}

#[test]
fn fiber_invariance_of_the_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ds = GaussianDataset::new((0..8).map(|_| crate::spd::sample_spd(&mut rng, 2, 0.3)).collect()).unwrap();
    let tpca = fit_tpca(&ds, 1).unwrap();
    let seg = tpca_component_as_segment(&tpca, 0, 1e-3).unwrap();
    let config = SolverConfig {
        outer_tol: 1e-13,
        outer_max_iters: 2000,
        ..quick()
    };
    let base = fit_first_component_from(&ds, &seg, &config).unwrap();
    let q = linalg::random_rotation(&mut rng, 2);
    let moved = fit_first_component_from(&ds, &seg.rotated(&q), &config).unwrap();
    assert!((base.cost - moved.cost).abs() < 1e-8, "{} vs {}", base.cost, moved.cost);
}

#[test]
fn second_component_crosses_orthogonally() {
    let (a, b) = circle_parameters(0.6).unwrap();
    let ds = gen_circle(a, b, 12, 0.05).unwrap();
    let comps = fit_components(&ds, 2, &quick()).unwrap();
    let (first, second) = (&comps[0], &comps[1]);
    let t_star = second.intersection_time.unwrap();
    assert!(first.segment.contains(t_star));
    let crossing = first.segment.eval(t_star).unwrap();
    let start = second.segment.eval(0.0).unwrap();
    assert!(crate::spd::bures_wasserstein(&crossing, &start).unwrap() < 1e-6);
    assert_eq!(second.frame.len(), 1);
    assert_invariants(&ds, second);
}

#[test]
fn second_component_on_geodesic_data() {
    let a = Mat::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 0.9]);
    let k = Mat::from_row_slice(2, 2, &[0.2, 0.0, 0.0, -0.1]);
    let seg = GeodesicSegment::from_parts(a.clone(), &k * &a, 1e-3).unwrap();
    let ds = GaussianDataset::new([-0.4, 0.0, 0.3, 0.6].iter().map(|&t| seg.eval(t).unwrap()).collect()).unwrap();
    let comps = fit_components(&ds, 2, &quick()).unwrap();
    assert!(comps[0].cost < 1e-9);
    assert!(comps[1].cost >= 0.0);
    assert_invariants(&ds, &comps[1]);
}

#[test]
fn axis_aligned_three_dimensional_components() {
    // independent spreads along the three axes, largest first
    let mut matrices = Vec::new();
    for &s1 in &[-0.6f64, 0.0, 0.6] {
        for &s2 in &[-0.3f64, 0.3] {
            for &s3 in &[-0.1f64, 0.1] {
                matrices
                    .push(SpdMatrix::diagonal(&[(2.0 + s1).powi(2), (1.5 + s2).powi(2), (1.0 + s3).powi(2)]).unwrap());
            }
        }
    }
    let ds = GaussianDataset::new(matrices).unwrap();
    let comps = fit_components(&ds, 3, &quick()).unwrap();
    for (j, c) in comps.iter().enumerate() {
        assert_invariants(&ds, c);
        // the aligned direction concentrates on one diagonal entry
        let x = c.segment.direction() * c.rotations[0].matrix().transpose();
        assert!(x[(j, j)].abs() > 0.999, "component {j}: {x}");
    }
    assert_eq!(comps[2].frame.len(), 2);
}

#[test]
fn too_many_components_fail() {
    let ds = diagonal_dataset(&[(1.0, 1.2), (1.5, 1.0), (1.2, 1.6), (1.8, 1.3)]);
    let err = fit_components(&ds, 4, &quick()).unwrap_err();
    assert!(matches!(err, GpcaError::NoRemainingDirections { order: 4 }));
}

#[test]
fn zero_dispersion_is_flagged() {
    let s = SpdMatrix::diagonal(&[2.0, 1.0]).unwrap();
    let ds = GaussianDataset::new(vec![s.clone(), s.clone(), s]).unwrap();
    let c = fit_first_component(&ds, &quick()).unwrap();
    let disp = explained_dispersion(&ds, &[c]).unwrap();
    assert!(disp.zero_dispersion);
    assert_eq!(disp.entries[0].fraction, 1.0);
}

#[test]
fn fits_are_deterministic() {
    let (a, b) = circle_parameters(0.5).unwrap();
    let ds = gen_circle(a, b, 8, 0.05).unwrap();
    let x = fit_components(&ds, 2, &quick()).unwrap();
    let y = fit_components(&ds, 2, &quick()).unwrap();
    assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
}

#[test]
fn invalid_config_is_rejected() {
    let ds = diagonal_dataset(&[(1.0, 1.2), (1.5, 1.0)]);
    let bad = SolverConfig {
        restarts: 0,
        ..SolverConfig::default()
    };
    assert!(fit_first_component(&ds, &bad).is_err());
    let bad = SolverConfig {
        epsilon: 0.0,
        ..SolverConfig::default()
    };
    assert!(bad.validate().is_err());
}
