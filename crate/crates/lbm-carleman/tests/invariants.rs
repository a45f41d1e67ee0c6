use lbm_carleman::carleman::{CarlemanOperator, CarlemanVector, CollisionMatrices};
use lbm_carleman::error_analysis::{fit_error_model, fit_power_law, linear_fit};
use lbm_carleman::harness::{fmt4, Experiment, ExperimentConfig};
use lbm_carleman::lattice::{collide, equilibrium, moments, norm2, stream, LatticeGeometry, StreamingMap, VelocityModel};
use lbm_carleman::linear_system::{SystemKind, TimeBlockSystem};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn populations(len: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_conserves_mass_and_momentum(dim in 1usize..=3, g in populations(27, 0.1), tau in 0.51f64..2.0) {
        let model = VelocityModel::new(dim).unwrap();
        let g = &g[..model.q()];
        let out = collide(g, &model, tau).unwrap();
        let (r0, u0) = moments(g, &model).unwrap();
        let (r1, u1) = moments(&out, &model).unwrap();
        prop_assert!((r0[0] - r1[0]).abs() < 1e-14);
        for (a, b) in u0.iter().zip(&u1) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_reproduces_moments(dim in 1usize..=3, rho in -0.1f64..0.1, u in populations(3, 0.1)) {
        let model = VelocityModel::new(dim).unwrap();
        let geq = equilibrium(&[rho], &u[..dim], &model).unwrap();
        let (r, v) = moments(&geq, &model).unwrap();
        prop_assert!((r[0] - rho).abs() < 1e-15);
        for k in 0..dim {
            prop_assert!((v[k] - u[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_form_matches_bgk(dim in 1usize..=2, g in populations(18, 0.2), tau in 0.51f64..2.0) {
        let model = VelocityModel::new(dim).unwrap();
        let g = &g[..2 * model.q()];
        let cm = CollisionMatrices::new(&model, tau).unwrap();
        let a = cm.collide_quadratic(g);
        let b = collide(g, &model, tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn streaming_is_a_norm_preserving_permutation(
        nx in 2usize..6,
        ny in 2usize..6,
        wall_mask in prop::collection::vec(any::<bool>(), 25),
        g in populations(25 * 9, 1.0),
    ) {
        let model = VelocityModel::new(2).unwrap();
        let n = nx * ny;
        let geom = LatticeGeometry::with_walls(&[nx, ny], wall_mask[..n].to_vec()).unwrap();
        let g = &g[..n * 9];
        let map = StreamingMap::new(&model, &geom).unwrap();
        let s = stream(g, &model, &geom).unwrap();
        prop_assert_eq!(&s, &map.apply(g));
        let mut a: Vec<f64> = g.to_vec();
        let mut b = s.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(map.apply_inverse(&s), g.to_vec());
    }

    #[test]
    fn kronecker_block_norms_are_powers(g in populations(6, 1.0), nc in 1usize..=4) {
        let y = CarlemanVector::from_state(&g, nc, 1 << 30).unwrap();
        let n = norm2(&g);
        for (k, bn) in y.block_norms().iter().enumerate() {
            prop_assert!((bn - n.powi(k as i32 + 1)).abs() <= 1e-12 * n.powi(k as i32 + 1).max(1.0));
        }
    }

    #[test]
    fn time_block_adjoint_identity(seed in any::<u64>(), nc in 1usize..=2, final_state in any::<bool>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let geom = LatticeGeometry::periodic(&[3]).unwrap();
        let op = CarlemanOperator::new(&geom, 0.8, nc).unwrap();
        let kind = if final_state { SystemKind::Final { w: 2 } } else { SystemKind::History };
        let sys = TimeBlockSystem::new(&op, kind, 3);
        let x: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&sys.apply(&x).unwrap(), &z);
        let rhs = dot(&x, &sys.apply_adjoint(&z).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let back = sys.apply(&sys.solve(&z).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fits_recover_exact_models(c in 0.1f64..10.0, slope in -2.0f64..3.0) {
        let pts: Vec<(f64, f64)> = [10.0, 30.0, 100.0, 300.0].iter().map(|&re: &f64| (re, c * re.powf(slope))).collect();
        let f = fit_power_law(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.prefactor / c - 1.0).abs() < 1e-9);
        let pts: Vec<(f64, f64)> = (1..=5).map(|n| (n as f64, c * (slope * n as f64).exp())).collect();
        let f = fit_error_model(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.predict(3.0) / pts[2].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_fit_residual_is_zero_on_a_line(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let xs = [0.0, 1.0, 2.5, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let (s, i, r) = linear_fit(&xs, &ys).unwrap();
        prop_assert!((s - a).abs() < 1e-12 && (i - b).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn fmt4_has_four_decimals(x in -1e3f64..1e3) {
        let s = fmt4(x);
        let (_, frac) = s.split_once('.').unwrap();
        prop_assert_eq!(frac.len(), 4);
        prop_assert!((s.parse::<f64>().unwrap() - x).abs() <= 5e-5 + 1e-12);
    }

    #[test]
    fn config_hash_ignores_workers_and_out(workers in 1usize..16, seed in any::<u64>()) {
        let mut a = ExperimentConfig::new(Experiment::GateBudget);
        a.seed = seed;
        let mut b = a.clone();
        b.workers = workers;
        b.out = Some("elsewhere".into());
        prop_assert_eq!(a.content_hash(), b.content_hash());
        b.seed = seed.wrapping_add(1);
        prop_assert_ne!(a.content_hash(), b.content_hash());
    }
}

#[test]
fn fmt4_rounds_ties_away_from_zero() {
    assert_eq!(fmt4(0.03125), "0.0313");
    assert_eq!(fmt4(-0.03125), "-0.0313");
    assert_eq!(fmt4(0.630938), "0.6309");
}
