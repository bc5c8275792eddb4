use bures_gpca::dataset::GaussianDataset;
use bures_gpca::geodesic::{GeodesicSegment, DEFAULT_EPSILON};
use bures_gpca::io::{dataset_to_csv, dataset_to_json, parse_dataset_csv, parse_dataset_json};
use bures_gpca::linalg::{self, Mat};
use bures_gpca::rotation::{so_exp, SkewMatrix};
use bures_gpca::spd::{
    bures_wasserstein, monge_map, optimal_rotation, sample_spd, spd_sqrt, FiberRepresentative, Rotation, SpdMatrix,
    TangentMatrix,
};
use bures_gpca::tpca::{fit_tpca, linearized_bw};
use bures_gpca::univariate::{fit_1d_gpca, Gaussian1D};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd(seed: u64, d: usize) -> SpdMatrix {
    sample_spd(&mut ChaCha8Rng::seed_from_u64(seed), d, 0.7)
}

fn dims() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3), Just(4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bw_is_a_metric(d in dims(), s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, b, c) = (spd(s1, d), spd(s2, d), spd(s3, d));
        let ab = bures_wasserstein(&a, &b).unwrap();
        prop_assert!((ab - bures_wasserstein(&b, &a).unwrap()).abs() < 1e-10);
        prop_assert!(bures_wasserstein(&a, &a).unwrap() < 1e-7);
        prop_assert!(bures_wasserstein(&a, &c).unwrap() <= ab + bures_wasserstein(&b, &c).unwrap() + 1e-9);
    }

    #[test]
    fn monge_map_pushes_forward(d in dims(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (spd(s1, d), spd(s2, d));
        let t = monge_map(&a, &b).unwrap();
        let pushed = t.matrix() * a.matrix() * t.matrix();
        prop_assert!((pushed - b.matrix()).abs().max() < 1e-9 * (1.0 + b.matrix().norm()));
    }

    #[test]
    fn optimal_rotation_realizes_the_distance(d in dims(), s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, b) = (spd(s1, d), spd(s2, d));
        let q = optimal_rotation(&a, &b).unwrap();
        let (ra, rb) = (spd_sqrt(&a).into_matrix(), spd_sqrt(&b).into_matrix());
        let at_q = (&ra - &rb * q.matrix()).norm();
        prop_assert!((at_q - bures_wasserstein(&a, &b).unwrap()).abs() < 1e-8);
        let other = Rotation::random(&mut ChaCha8Rng::seed_from_u64(s3), d);
        prop_assert!((&ra - &rb * other.matrix()).norm() >= at_q - 1e-10);
    }

    #[test]
    fn rotation_exponential_stays_on_the_group(d in dims(), seed in any::<u64>(), scale in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Rotation::random(&mut rng, d);
        let v = SkewMatrix::skew_part(&(linalg::gaussian_matrix(&mut rng, d, d) * scale));
        let p = so_exp(&q, &v).into_matrix();
        prop_assert!((p.transpose() * &p - Mat::identity(d, d)).abs().max() < 1e-10);
        prop_assert!((p.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn horizontal_lines_have_unit_speed(d in dims(), seed in any::<u64>(), fs in 0.0f64..1.0, fu in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = spd_sqrt(&sample_spd(&mut rng, d, 0.5)).into_matrix() * linalg::random_rotation(&mut rng, d);
        let k = linalg::random_symmetric(&mut rng, d);
        let x = &k * &a;
        let x = &x / x.norm();
        let seg = GeodesicSegment::new(&FiberRepresentative::new(a).unwrap(), &TangentMatrix(x), DEFAULT_EPSILON).unwrap();
        let (lo, hi) = seg.finite_window(-2.0, 2.0);
        let (s, u) = (lo + fs * (hi - lo), lo + fu * (hi - lo));
        let dist = bures_wasserstein(&seg.eval(s).unwrap(), &seg.eval(u).unwrap()).unwrap();
        prop_assert!((dist - (u - s).abs()).abs() < 1e-7);
    }

    #[test]
    fn tangent_scores_reproduce_linearized_distances(seed in any::<u64>(), n in 3usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = GaussianDataset::new((0..n).map(|_| sample_spd(&mut rng, 2, 0.5)).collect()).unwrap();
        let t = fit_tpca(&ds, 3).unwrap();
        let bary = &t.barycenter;
        for i in 0..n {
            let radial = linearized_bw(bary, bary, &ds.matrices()[i]).unwrap();
            prop_assert!((radial - bures_wasserstein(bary, &ds.matrices()[i]).unwrap()).abs() < 1e-9);
            for j in 0..i {
                let scores: f64 = t.projection_scores[i]
                    .iter()
                    .zip(&t.projection_scores[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let lin = linearized_bw(bary, &ds.matrices()[i], &ds.matrices()[j]).unwrap();
                prop_assert!((scores - lin).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn oracle_beats_any_line(
        pts in proptest::collection::vec((-2.0f64..2.0, 0.2f64..2.5), 2..12),
        angle in 0.0f64..std::f64::consts::PI,
        offset in -3.0f64..3.0,
    ) {
        let cloud: Vec<Gaussian1D> = pts.iter().map(|&(m, s)| Gaussian1D::new(m, s).unwrap()).collect();
        let fit = fit_1d_gpca(&cloud).unwrap();
        let normal = (-angle.sin(), angle.cos());
        let other: f64 = pts.iter().map(|&(m, s)| (m * normal.0 + s * normal.1 - offset).powi(2)).sum();
        // the unclipped residual of an arbitrary line bounds the clipped fit
        // from above unless the fit had to clip
        if !fit.clipped {
            prop_assert!(fit.cost <= other + 1e-9);
        }
        for &t in &fit.times {
            prop_assert!(fit.point(t).unwrap().std() > 0.0);
        }
    }

    #[test]
    fn datasets_round_trip(d in dims(), seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = GaussianDataset::new((0..n + 1).map(|_| sample_spd(&mut rng, d, 1.0)).collect()).unwrap();
        let from_json = parse_dataset_json(&dataset_to_json(&ds)).unwrap();
        let from_csv = parse_dataset_csv(&dataset_to_csv(&ds).unwrap()).unwrap();
        prop_assert_eq!(from_json.matrices(), ds.matrices());
        prop_assert_eq!(from_csv.matrices(), ds.matrices());
    }
}
