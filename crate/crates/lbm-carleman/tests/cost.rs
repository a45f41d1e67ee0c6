use approx::assert_relative_eq;
use lbm_carleman::carleman::CollisionMatrices;
use lbm_carleman::cost::*;
use lbm_carleman::lattice::VelocityModel;
use nalgebra::{DMatrix, SVD};

#[test]
fn closed_forms_match_dense_svd() {
    for dim in 1..=3 {
        let model = VelocityModel::new(dim).unwrap();
        for tau in [0.5 + 1e-6, 0.6, 0.75, 1.0, 2.0] {
            let cm = CollisionMatrices::new(&model, tau).unwrap();
            let s1 = SVD::new(cm.identity_plus_f1_matrix(), false, false).singular_values.max();
            assert!((s1 - alpha_if1(tau, dim).unwrap()).abs() < 1e-10, "D={dim} tau={tau}");
            if dim < 3 {
                let s2 = SVD::new(cm.f2_matrix(), false, false).singular_values.max();
                assert!((s2 - alpha_f2bar(tau, dim).unwrap()).abs() < 1e-10, "D={dim} tau={tau}");
            }
        }
    }
    assert_relative_eq!(alpha_if1(1.0, 1).unwrap(), 6f64.sqrt() / 2.0, epsilon = 1e-12);
    assert_relative_eq!(alpha_f2bar(0.6, 1).unwrap(), 6f64.sqrt() / 0.6, epsilon = 1e-12);
}

#[test]
fn tabulated_hosvd_reconstructs() {
    for dim in [1, 2] {
        for tau in [0.6, 1.0] {
            let c = verify_hosvd(dim, tau).unwrap();
            assert!(c.reconstruction <= 1e-12, "D={dim}: {}", c.reconstruction);
            assert!(c.unitarity <= 1e-12);
        }
    }
    assert!(verify_hosvd(3, 1.0).is_err());
}

#[test]
fn svd_column_patterns() {
    for tau in [0.6, 1.0, 1.7] {
        let s = adapted_svd_if1(1, tau).unwrap();
        let model = VelocityModel::new(1).unwrap();
        let m = CollisionMatrices::new(&model, tau).unwrap().identity_plus_f1_matrix();
        assert!(s.reconstruction_error(&m) < 1e-12);
        assert_eq!(s.count(ColumnPattern::ShellConstant), 2);
        assert_eq!(s.count(ColumnPattern::Odd), 1);
        let s = adapted_svd_if1(2, tau).unwrap();
        let model = VelocityModel::new(2).unwrap();
        let m = CollisionMatrices::new(&model, tau).unwrap().identity_plus_f1_matrix();
        assert!(s.reconstruction_error(&m) < 1e-12);
        assert_eq!(s.count(ColumnPattern::Odd), 4);
        assert_eq!(s.count(ColumnPattern::ShellConstant) + s.count(ColumnPattern::Even), 5);
        assert!(s.count(ColumnPattern::ShellConstant) >= 2);
    }
}

#[test]
fn data_qubits_example() {
    let n = n_data(1e8, 0.75, 3, 10, 10).unwrap();
    println!("{n:?}");
    assert_eq!(n.ceiled, 722);
    let n = n_data(1.0, 0.75, 2, 3, 4).unwrap();
    assert_relative_eq!(n.raw, 12.0 + 3f64.log2() + 4.0, epsilon = 1e-12);
}

#[test]
fn gate_budgets() {
    for nc in [2, 3, 4] {
        let g = gate_budget(2, nc, 1e-6, 10, 1e6, 0.75).unwrap();
        println!("{nc} full {} explicit {} simple {} frac {}", g.full, g.full_explicit_sums, g.simplified, g.breakdown.collision_circuits / g.full);
        assert!((g.simplified - g.full).abs() / g.full <= 1e-3);
    }
    for nc in 1..=5 {
        let g1 = gate_budget(1, nc, 1e-6, 10, 1e3, 0.75).unwrap();
        let g2 = gate_budget(2, nc, 1e-6, 10, 1e3, 0.75).unwrap();
        println!("{nc} D1 {:e} D2 {:e}", g1.full, g2.full);
    }
    assert!(gate_budget(3, 2, 1e-6, 10, 1e6, 0.75).is_err());
}

#[test]
fn query_bound_grid() {
    let q = query_bounds(1.0, 1.0, 1.0, 0.5).unwrap();
    assert_relative_eq!(q.rigorous, 56.0 + 1.05 * (0.75f64.sqrt() / 0.5).ln() + 3.17, epsilon = 1e-12);
    for kappa in [1.0, 3.0, 10.0, 1e2, 1e4, 1e6, 1e9] {
        for eps in [0.5, 1e-2, 1e-4, 1e-7, 1e-10] {
            let q = query_bounds(kappa, 2.0, 1.5, eps).unwrap();
            assert!(q.rigorous <= q.simplified, "kappa={kappa} eps={eps}");
        }
    }
    assert!(query_bounds(10.0, 1.0, 1.0, 1e-11).is_err());
}

#[test]
fn probabilities() {
    assert_relative_eq!(p_final(2.0, 2.0, 1), 0.5);
    assert!(p_final(1.0, 1.0, 40) > 1.0 - 1e-9);
    assert_relative_eq!(p_first_block(1.0, 4), 0.25);
    assert_relative_eq!(p_first_block(1.0 - 1e-7, 4), 0.25, epsilon = 1e-5);
}

#[test]
fn block_encoding_assembly() {
    let a = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 0.4, 0.2]);
    let b = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, -0.5, 0.9]);
    let (aa, ab) = (1.2, 1.5);
    let ua = unitary_dilation(&a, aa).unwrap();
    let ub = unitary_dilation(&b, ab).unwrap();
    let id4 = DMatrix::<f64>::identity(4, 4);
    assert!((ua.transpose() * &ua - &id4).abs().max() < 1e-12);
    assert!((top_left(&ua, 2) - &a / aa).abs().max() < 1e-12);
    let up = product_encoding(&ua, &ub, 2);
    assert!((top_left(&up, 2) - &a * &b / (aa * ab)).abs().max() < 1e-12);
    let (ul, total) = lcu_encoding(&[(ua.clone(), aa), (ub.clone(), ab)], 2).unwrap();
    assert!((ul.transpose() * &ul - DMatrix::<f64>::identity(ul.nrows(), ul.nrows())).abs().max() < 1e-12);
    assert!((top_left(&ul, 2) - (&a + &b) / total).abs().max() < 1e-12);
    assert!(unitary_dilation(&a, 0.1).is_err());
}

#[test]
fn lambda_table() {
    let d2 = classical_comparison(100.0, 0.75, 2, 1.936).unwrap();
    assert_relative_eq!(d2.lambda, 0.314, epsilon = 1e-9);
    let d1 = classical_comparison(100.0, 0.75, 1, 2.792).unwrap();
    assert_relative_eq!(d1.lambda, -1.292, epsilon = 1e-9);
    assert_relative_eq!(classical_comparison(10.0, 0.75, 3, 0.0).unwrap().q_c_exponent, 3.0);
}
