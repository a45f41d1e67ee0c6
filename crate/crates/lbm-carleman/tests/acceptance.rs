//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lbm_carleman::carleman::{evolve_carleman, CarlemanOperator, CarlemanVector, CollisionMatrices};
use lbm_carleman::cost::*;
use lbm_carleman::error_analysis::{carleman_error_at, detect_threshold, fit_power_law, Threshold};
use lbm_carleman::harness::fmt4;
use lbm_carleman::lanczos::LanczosOptions;
use lbm_carleman::lattice::{collide, equilibrium, norm2, stream, LatticeGeometry, VelocityModel};
use lbm_carleman::linear_system::*;
use lbm_carleman::observables::{boundary_state, drag_force, overlap_check};
use lbm_carleman::simulation::{carleman_dim, run_lbe_steps, select_params, InitialKind};
use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn random(len: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

/// (D, N_C, Re, N_x, T*, tau, u, dim C, dim A_H) as printed in the parameter tables.
const APP_F: [(usize, usize, f64, usize, usize, &str, &str, u128, Option<u128>); 13] = [
    (1, 1, 1000.0, 178, 2372, "0.540", "0.0750", 534, Some(1267182)),
    (1, 2, 200.0, 54, 388, "0.6094", "0.1361", 26406, Some(10271934)),
    (1, 2, 1000.0, 178, 2372, "0.540", "0.0750", 285690, None),
    (1, 3, 100.0, 32, 178, "0.6687", "0.1768", 894048, Some(160034592)),
    (1, 3, 500.0, 106, 1088, "0.5617", "0.0971", 32258874, None),
    (1, 4, 30.0, 13, 46, "0.8580", "0.2774", 2374320, Some(111593040)),
    (1, 4, 150.0, 43, 281, "0.6310", "0.1525", 279086340, None),
    (1, 5, 50.0, 19, 82, "0.7602", "0.2294", 612436557, None),
    (2, 1, 100.0, 32, 1000, "0.5300", "0.0313", 9216, Some(9225216)),
    (2, 1, 250.0, 63, 3953, "0.5120", "0.0159", 35721, None),
    (2, 2, 20.0, 10, 90, "0.6500", "0.1000", 810900, Some(73791900)),
    (2, 2, 150.0, 43, 1838, "0.5200", "0.0233", 276939522, None),
    (2, 3, 20.0, 10, 90, "0.6500", "0.1000", 729810900, None),
];

/// A printed value matches if it equals the computed value at its own
/// precision, or, with a trailing zero, at one decimal fewer.
fn printed_matches(computed: f64, printed: &str) -> bool {
    let decimals = printed.split('.').nth(1).map_or(0, str::len);
    let at = |k: usize| {
        let s = 10f64.powi(k as i32);
        format!("{:.*}", k, (computed * s).round() / s)
    };
    if at(decimals) == printed {
        return true;
    }
    printed.ends_with('0') && decimals > 1 && at(decimals - 1) == printed[..printed.len() - 1]
}

fn c1_params_tables() -> Check {
    let mut padded = Vec::new();
    for (d, nc, re, nx, t, tau, u, dim_c, dim_ah) in APP_F {
        let sim = select_params(re, 0.75, d).map_err(e)?;
        let row = format!("D={d} N_C={nc} Re={re}");
        ensure(sim.n_x == nx && sim.t_star == t, format!("{row}: N_x={} T*={}", sim.n_x, sim.t_star))?;
        let c = carleman_dim(sim.state_dim(), nc as u32);
        ensure(c == dim_c, format!("{row}: dim C {c} vs {dim_c}"))?;
        if let Some(ah) = dim_ah {
            ensure(c * (t as u128 + 1) == ah, format!("{row}: dim A_H {}", c * (t as u128 + 1)))?;
        }
        ensure(printed_matches(sim.tau_bar_star, tau), format!("{row}: tau {} vs {tau}", sim.tau_bar_star))?;
        ensure(printed_matches(sim.u_ini_star, u), format!("{row}: u {} vs {u}", sim.u_ini_star))?;
        if fmt4(sim.tau_bar_star) != tau && tau.len() == 6 {
            padded.push(format!("Re={re} tau {} printed {tau}", fmt4(sim.tau_bar_star)));
        }
    }
    Ok(format!("13 rows exact; printed at 3 decimals with a padded zero: {}", if padded.is_empty() { "none".into() } else { padded.join(", ") }))
}

fn c2_prefactors() -> Check {
    let mut worst: f64 = 0.0;
    for dim in 1..=3 {
        let model = VelocityModel::new(dim).map_err(e)?;
        for tau in [0.5 + 1e-6, 0.6, 0.75, 1.0, 2.0] {
            let cm = CollisionMatrices::new(&model, tau).map_err(e)?;
            let s1 = SVD::new(cm.identity_plus_f1_matrix(), false, false).singular_values.max();
            worst = worst.max((s1 - alpha_if1(tau, dim).map_err(e)?).abs());
            if dim < 3 {
                let s2 = SVD::new(cm.f2_matrix(), false, false).singular_values.max();
                worst = worst.max((s2 - alpha_f2bar(tau, dim).map_err(e)?).abs());
            }
        }
    }
    ensure(worst <= 1e-10, format!("closed form vs SVD {worst:e}"))?;
    let ends = [(2.0 + 3f64.sqrt()).sqrt(), (0.5 * (7.0 + 3.0 * 5f64.sqrt())).sqrt(), 0.5 * (23.0 + 3.0 * 57f64.sqrt()).sqrt()];
    let mut end_err: f64 = 0.0;
    for (i, v) in ends.iter().enumerate() {
        end_err = end_err.max((alpha_if1(0.5, i + 1).map_err(e)? - v).abs());
    }
    ensure(end_err <= 1e-9, format!("tau=1/2 endpoints {end_err:e}"))?;
    Ok(format!("max |closed - SVD| = {worst:.2e} (tol 1e-10), endpoints {end_err:.2e} (tol 1e-9)"))
}

fn c3_hosvd() -> Check {
    let (mut rec, mut uni): (f64, f64) = (0.0, 0.0);
    for dim in [1, 2] {
        for tau in [0.6, 1.0, 2.0] {
            let c = verify_hosvd(dim, tau).map_err(e)?;
            rec = rec.max(c.reconstruction);
            uni = uni.max(c.unitarity);
        }
    }
    ensure(rec <= 1e-12 && uni <= 1e-12, format!("reconstruction {rec:e}, unitarity {uni:e}"))?;
    Ok(format!("reconstruction {rec:.2e}, unitarity {uni:.2e} (tol 1e-12)"))
}

fn c4_exactness() -> Check {
    let model = VelocityModel::new(1).map_err(e)?;
    let geom = LatticeGeometry::periodic(&[8]).map_err(e)?;
    let tau = 0.8;
    let u: Vec<f64> = (0..8).map(|i| 0.2 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / 8.0).sin()).collect();
    let g0 = equilibrium(&[0.0; 8], &u, &model).map_err(e)?;
    let exact = run_lbe_steps(&g0, tau, 3, &geom).map_err(e)?;
    let op = CarlemanOperator::new(&geom, tau, 4).map_err(e)?;
    let y0 = CarlemanVector::from_state(&g0, 4, 1 << 30).map_err(e)?;
    let evo = evolve_carleman(&y0, 3, &op, false).map_err(e)?;
    let errs: Vec<f64> = (1..=3).map(|t| rel_diff(&evo.first_blocks[t], &exact.states[t])).collect();
    ensure(errs[0] <= 1e-12 && errs[1] <= 1e-12, format!("t=1,2 errors {:e}, {:e}", errs[0], errs[1]))?;
    ensure(errs[2] > 1e-12, format!("no deviation at t=3: {:e}", errs[2]))?;
    Ok(format!("relative error t=1: {:.1e}, t=2: {:.1e} (tol 1e-12), t=3: {:.1e}", errs[0], errs[1], errs[2]))
}

fn c5_matrix_free() -> Check {
    let mut worst: f64 = 0.0;
    for (sizes, nc) in [(vec![4], 3), (vec![4, 4], 2)] {
        let geom = LatticeGeometry::periodic(&sizes).map_err(e)?;
        let op = CarlemanOperator::new(&geom, 0.7, nc).map_err(e)?;
        let asm = op.assemble_sparse(1 << 30).map_err(e)?;
        for seed in 0..3 {
            let x = random(op.dim(), 1.0, seed);
            let pairs = [
                (op.apply_collision(&x).map_err(e)?, asm.collision.matvec(&x).map_err(e)?),
                (op.apply_step(&x).map_err(e)?, asm.step.matvec(&x).map_err(e)?),
                (op.apply_collision_adjoint(&x).map_err(e)?, asm.collision.transpose().matvec(&x).map_err(e)?),
                (op.apply_step_adjoint(&x).map_err(e)?, asm.step.transpose().matvec(&x).map_err(e)?),
            ];
            for (a, b) in &pairs {
                worst = worst.max(rel_diff(a, b));
            }
        }
    }
    ensure(worst <= 1e-12, format!("relative difference {worst:e}"))?;
    Ok(format!("max relative difference {worst:.2e} (tol 1e-12) over C, SC and adjoints"))
}

fn c6_linear_system() -> Check {
    let (mut res, mut blk): (f64, f64) = (0.0, 0.0);
    for (sizes, nc, t_star) in [(vec![4], 2, 5), (vec![4, 4], 2, 3)] {
        let geom = LatticeGeometry::periodic(&sizes).map_err(e)?;
        let op = CarlemanOperator::new(&geom, 0.7, nc).map_err(e)?;
        let g0 = random(geom.num_sites() * op.model().q(), 0.05, 7);
        let y0 = CarlemanVector::from_state(&g0, nc, 1 << 30).map_err(e)?;
        let evo = evolve_carleman(&y0, t_star, &op, true).map_err(e)?;
        let hist = evo.history.expect("history requested");
        for kind in [SystemKind::History, SystemKind::Final { w: 2 }] {
            let sys = TimeBlockSystem::new(&op, kind, t_star);
            let b = sys.initial_rhs(&y0).map_err(e)?;
            let x = sys.solve(&b).map_err(e)?;
            res = res.max(max_abs_diff(&sys.apply(&x).map_err(e)?, &b));
            let bd = sys.block_dim();
            for i in 0..sys.num_blocks() {
                let want = hist[i.min(t_star)].as_slice();
                blk = blk.max(max_abs_diff(&x[i * bd..(i + 1) * bd], want));
            }
            let rb = random(sys.dim(), 1.0, 3);
            res = res.max(max_abs_diff(&sys.apply(&sys.solve(&rb).map_err(e)?).map_err(e)?, &rb));
        }
    }
    ensure(res <= 1e-10, format!("residual {res:e}"))?;
    ensure(blk <= 1e-12, format!("block mismatch {blk:e}"))?;
    Ok(format!("|A solve(b) - b| {res:.1e} (tol 1e-10), blocks vs (SC)^t y_ini {blk:.1e}"))
}

fn c7_condition_oracle() -> Check {
    let sim = select_params(10.0, 0.75, 1).map_err(e)?;
    let geom = sim.geometry().map_err(e)?;
    let model = VelocityModel::new(1).map_err(e)?;
    let opts = LanczosOptions { tol: 1e-12, max_iter: 600, ..Default::default() };
    let mut out = Vec::new();
    for nc in [1, 2] {
        let op = CarlemanOperator::new(&geom, sim.tau_bar_star, nc).map_err(e)?;
        let sys = TimeBlockSystem::new(&op, SystemKind::History, sim.t_star);
        let nc_lanczos = norm_c(&model, sim.tau_bar_star, nc, &opts).map_err(e)?.value;
        let pn = power_norms(&op, sim.t_star, &opts).map_err(e)?;
        let est = condition_number(&sys, nc_lanczos, Some(&pn), &opts).map_err(e)?;

        let n = sys.dim();
        let a = DMatrix::from_row_slice(n, n, &sys.to_dense().map_err(e)?);
        let sv = SVD::new(a, false, false).singular_values;
        let nc_dense = norm_c_dense(&model, sim.tau_bar_star, nc, 4096).map_err(e)?;
        let kappa_dense = (1.0 + nc_dense) / sv.min();
        let rel = (est.kappa - kappa_dense).abs() / kappa_dense;
        ensure(rel <= 1e-6, format!("N_C={nc}: Lanczos {} vs dense {kappa_dense} ({rel:e})", est.kappa))?;
        ensure(est.kappa >= est.kappa_lower, format!("N_C={nc}: kappa below lower bound"))?;
        let upper = est.kappa_upper.expect("power norms given");
        ensure(est.kappa <= upper, format!("N_C={nc}: kappa {} above upper bound {upper}", est.kappa))?;
        out.push(format!(
            "N_C={nc}: kappa {:.6} rel {rel:.1e} (dim {n}, sigma ratio {:.4}), {:.3} <= kappa <= {:.3}",
            est.kappa,
            sv.max() / sv.min(),
            est.kappa_lower,
            upper
        ));
    }
    Ok(out.join("; "))
}

fn kappa_fit(dim: usize, nc: usize, res: &[f64]) -> std::result::Result<(f64, f64, Vec<(f64, f64)>), String> {
    let model = VelocityModel::new(dim).map_err(e)?;
    let opts = LanczosOptions::default();
    let mut pts = Vec::new();
    for &re in res {
        let sim = select_params(re, 0.75, dim).map_err(e)?;
        let op = CarlemanOperator::new(&sim.geometry().map_err(e)?, sim.tau_bar_star, nc).map_err(e)?;
        let sys = TimeBlockSystem::new(&op, SystemKind::History, sim.t_star);
        let nrm = norm_c(&model, sim.tau_bar_star, nc, &opts).map_err(e)?.value;
        let est = condition_number(&sys, nrm, None, &opts).map_err(e)?;
        ensure(est.kappa >= est.kappa_lower, format!("D={dim} N_C={nc} Re={re}: kappa below lower bound"))?;
        pts.push((re, est.kappa));
    }
    let fit = fit_power_law(&pts).map_err(e)?;
    Ok((fit.slope, fit.prefactor, pts))
}

fn c8_condition_scaling() -> Check {
    let cases = [
        (1, 1, vec![10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0], 1.167, 0.05),
        (1, 2, vec![10.0, 20.0, 50.0, 100.0, 200.0], 1.691, 0.1),
        (2, 1, vec![10.0, 20.0, 50.0, 100.0], 1.588, 0.1),
    ];
    let mut out = Vec::new();
    let mut failed = Vec::new();
    for (dim, nc, res, want, tol) in cases {
        let (chi, c, _) = kappa_fit(dim, nc, &res)?;
        let line = format!("D={dim} N_C={nc}: chi {chi:.3} (ref {want} +/- {tol}), c {c:.3}");
        if (chi - want).abs() > tol {
            failed.push(line.clone());
        }
        out.push(line);
    }
    ensure(failed.is_empty(), failed.join("; "))?;
    Ok(out.join("; "))
}

fn c9_eigenstates() -> Check {
    let d1 = |n: usize, walls: bool| -> std::result::Result<LatticeGeometry, String> {
        let mut g = LatticeGeometry::periodic(&[n]).map_err(e)?;
        if walls {
            g.add_wall_plane(0, 0);
            g.add_wall_plane(0, n - 1);
        }
        Ok(g)
    };
    let mut boxed = LatticeGeometry::periodic(&[6, 6]).map_err(e)?;
    for (axis, i) in [(0, 0), (1, 0), (0, 5), (1, 5)] {
        boxed.add_wall_plane(axis, i);
    }
    let mut flat = LatticeGeometry::periodic(&[4, 6]).map_err(e)?;
    flat.add_wall_plane(1, 0);
    let cases = [
        (d1(6, false)?, Theta::Zero, 1.0),
        (LatticeGeometry::periodic(&[4, 4]).map_err(e)?, Theta::Zero, 1.0),
        (d1(8, true)?, Theta::Pi, -1.0),
        (boxed, Theta::Pi, -1.0),
        (flat, Theta::Pi, -1.0),
    ];
    let mut worst: f64 = 0.0;
    for (geom, theta, lambda) in cases {
        let op = CarlemanOperator::new(&geom, 0.65, 2).map_err(e)?;
        let xi = eigenstate_xi(theta, &op).map_err(e)?;
        let sx = op.apply_step(xi.as_slice()).map_err(e)?;
        let r: Vec<f64> = sx.iter().zip(xi.as_slice()).map(|(a, b)| a - lambda * b).collect();
        worst = worst.max(norm2(&r));
    }
    ensure(worst <= 1e-12, format!("residual {worst:e}"))?;
    Ok(format!("max residual {worst:.1e} (tol 1e-12) over xi_0 (D=1,2, no walls) and xi_pi (D=1,2 with walls)"))
}

fn c10_error_convergence() -> Check {
    let cap = 4u128 << 30;
    let eps = |re: f64, nc: usize| carleman_error_at(re, 0.75, 1, InitialKind::Sinusoidal, nc, cap).map(|r| r.epsilon_c).map_err(e);
    let mut notes = Vec::new();
    for re in [20.0, 50.0] {
        let v = [eps(re, 1)?, eps(re, 2)?, eps(re, 3)?];
        ensure(v[0] > v[1] && v[1] > v[2], format!("Re={re}: not decreasing {v:?}"))?;
        notes.push(format!("Re={re}: {:.3e} > {:.3e} > {:.3e}", v[0], v[1], v[2]));
    }
    let mut table = Vec::new();
    for re in [20.0, 50.0, 100.0, 200.0, 500.0, 1000.0] {
        for nc in [1, 2] {
            table.push((re, nc, eps(re, nc)?));
        }
    }
    let at = |nc| table.iter().find(|r| r.0 == 1000.0 && r.1 == nc).unwrap().2;
    ensure(at(2) > at(1), format!("Re=1000: eps(2) {} <= eps(1) {}", at(2), at(1)))?;
    notes.push(format!("Re=1000: eps(2) {:.3} > eps(1) {:.3}", at(2), at(1)));
    match detect_threshold(&table).map_err(e)? {
        Threshold::Found { re_t, .. } => {
            ensure((50.0..=500.0).contains(&re_t), format!("Re_T {re_t} outside [50, 500]"))?;
            notes.push(format!("Re_T {re_t:.1} in [50, 500]"));
        }
        Threshold::NotFoundInRange => return Err("no threshold found".into()),
    }
    Ok(notes.join("; "))
}

fn c11_conservation() -> Check {
    let (mut cons, mut fixed, mut step): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (dim, sizes) in [(1, vec![7]), (2, vec![5, 4]), (3, vec![3, 3, 2])] {
        let model = VelocityModel::new(dim).map_err(e)?;
        let geom = LatticeGeometry::periodic(&sizes).map_err(e)?;
        let q = model.q();
        let n = geom.num_sites();
        let g = random(n * q, 0.02, dim as u64);
        let c = collide(&g, &model, 0.7).map_err(e)?;
        for s in 0..n {
            let (r0, u0) = model.moments_site(&g[s * q..(s + 1) * q]);
            let (r1, u1) = model.moments_site(&c[s * q..(s + 1) * q]);
            cons = cons.max((r0 - r1).abs());
            for k in 0..dim {
                cons = cons.max((u0[k] - u1[k]).abs());
            }
        }
        let st = stream(&g, &model, &geom).map_err(e)?;
        // Streaming permutes entries, so the sorted multisets, and hence the
        // norms summed in that order, agree bit for bit.
        let mut a = g.clone();
        let mut b = st.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        ensure(a == b, format!("D={dim}: streaming is not a permutation"))?;
        ensure(norm2(&a) == norm2(&b), format!("D={dim}: streaming changed the norm"))?;
        ensure((norm2(&st) - norm2(&g)).abs() <= 1e-15, format!("D={dim}: streaming changed the norm"))?;
        let traj = run_lbe_steps(&g, 0.7, 3, &geom).map_err(e)?;
        let total = |x: &[f64]| {
            let mut t = [0.0; 4];
            for s in 0..n {
                let (r, u) = model.moments_site(&x[s * q..(s + 1) * q]);
                t[0] += r;
                for k in 0..3 {
                    t[k + 1] += u[k];
                }
            }
            t
        };
        let t0 = total(&g);
        for x in &traj.states {
            step = step.max(max_abs_diff(&total(x), &t0));
        }
        let rho = random(n, 0.01, 11);
        let u = random(n * dim, 0.05, 12);
        let eq = equilibrium(&rho, &u, &model).map_err(e)?;
        fixed = fixed.max(max_abs_diff(&collide(&eq, &model, 0.7).map_err(e)?, &eq));
    }
    ensure(cons <= 1e-13 && step <= 1e-13, format!("collision {cons:e}, step totals {step:e}"))?;
    ensure(fixed <= 1e-14, format!("equilibrium fixed point {fixed:e}"))?;
    Ok(format!("collision moments {cons:.1e}, step totals {step:.1e} (tol 1e-13), streaming norm exact, fixed point {fixed:.1e} (tol 1e-14)"))
}

fn c12_cost_model() -> Check {
    let n = n_data(1e8, 0.75, 3, 10, 10).map_err(e)?;
    ensure(n.ceiled == 722, format!("n_D = {} (raw {})", n.ceiled, n.raw))?;
    for kappa in [1.0, 2.0, 10.0, 1e2, 1e3, 1e5, 1e8] {
        for eps in [0.5, 0.1, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10] {
            let q = query_bounds(kappa, 3.0, 2.0, eps).map_err(e)?;
            ensure(q.rigorous <= q.simplified, format!("kappa={kappa} eps={eps}: {} > {}", q.rigorous, q.simplified))?;
            ensure((q.simplified / (kappa * 1.5) - 85.0).abs() < 1e-12, "simplified constant is not 85")?;
        }
    }
    let lambdas = [(1, 1, 0.333), (1, 2, -0.191), (1, 3, -0.783), (1, 4, -1.292), (2, 1, 0.662), (2, 2, 0.314)];
    for (dim, nc, want) in lambdas {
        let (_, chi) = reference_power_law(dim, nc).expect("tabulated");
        let l = classical_comparison(100.0, 0.75, dim, chi).map_err(e)?.lambda;
        ensure(format!("{l:.3}") == format!("{want:.3}"), format!("lambda D={dim} N_C={nc}: {l:.3} vs {want}"))?;
    }
    let opts = LanczosOptions::default();
    let mut slopes = Vec::new();
    let mut failed = Vec::new();
    for (dim, grid, want) in [(1, 1..=8, 0.273), (2, 1..=6, 0.260), (3, 1..=5, 0.213)] {
        let started = Instant::now();
        let ncs: Vec<usize> = grid.collect();
        let (_, fit) = be_ratio_sweep(dim, 0.5, &ncs, &opts).map_err(e)?;
        let line = format!(
            "D={dim} N_C 1..{}: a {:.4} (ref {want} +/- 0.02), b {:.3}, {:.1} s",
            ncs.len(),
            fit.slope,
            fit.prefactor,
            started.elapsed().as_secs_f64()
        );
        if (fit.slope - want).abs() > 0.02 {
            failed.push(line.clone());
        }
        slopes.push(line);
    }
    ensure(failed.is_empty(), failed.join("; "))?;
    Ok(format!("n_D 722, 85 kappa dominates on 7x7 grid, lambda table 6/6 to 3 decimals; {}", slopes.join("; ")))
}

fn c13_gate_budget() -> Check {
    let mut gaps = Vec::new();
    for nc in [2, 3, 4] {
        let g = gate_budget(2, nc, 1e-6, 10, 1e6, 0.75).map_err(e)?;
        let gap = (g.full - g.simplified).abs() / g.full;
        ensure(gap <= 1e-3, format!("N_C={nc}: gap {gap:e}"))?;
        gaps.push(format!("{gap:.1e}"));
    }
    let mut ranges = Vec::new();
    for (dim, target) in [(1, 1e6), (2, 1e8)] {
        let counts: Vec<f64> = (1..=5)
            .map(|nc| gate_budget(dim, nc, 1e-6, 10, 1e6, 0.75).map(|g| g.full))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        for c in &counts {
            ensure(*c >= target / 10.0 && *c <= target * 10.0, format!("D={dim}: {c:e} not within 10x of {target:e}"))?;
        }
        ranges.push(format!("D={dim} {:.2e}..{:.2e}", counts[0], counts[4]));
    }
    Ok(format!("full vs simplified gaps {} (tol 1e-3); per-query T {}", gaps.join(", "), ranges.join(", ")))
}

fn c14_drag() -> Check {
    let model = VelocityModel::new(2).map_err(e)?;
    let open = LatticeGeometry::periodic(&[5, 5]).map_err(e)?;
    let g = random(25 * 9, 0.1, 1);
    let d = drag_force(&g, &model, &open).map_err(e)?;
    ensure(d.f_star.iter().all(|f| *f == 0.0), "force without walls")?;

    let n = 7;
    let mut geom = LatticeGeometry::periodic(&[n, n]).map_err(e)?;
    geom.add_wall_plane(1, 0);
    geom.set_wall(geom.site(&[3, 4]), true);
    let zero = drag_force(&vec![0.0; n * n * 9], &model, &geom).map_err(e)?;
    ensure(zero.f_star == zero.f0_star, "zero state force differs from F0")?;

    let mut ident: f64 = 0.0;
    for seed in 0..10 {
        let g = random(n * n * 9, 0.1, seed);
        ident = ident.max(overlap_check(&g, &model, &geom).map_err(e)?);
    }
    ensure(ident <= 1e-12, format!("overlap identity {ident:e}"))?;

    let g = random(n * n * 9, 0.1, 99);
    let d = drag_force(&g, &model, &geom).map_err(e)?;
    let mut oracle = [0.0; 2];
    for wx in 0..n {
        for wy in 0..n {
            let w = geom.site(&[wx, wy]);
            if !geom.is_wall(w) {
                continue;
            }
            for m in 1..9 {
                let v = model.velocity(m);
                let r = geom.site(&[(wx + n - v[0].rem_euclid(n as i32) as usize) % n, (wy + n - v[1].rem_euclid(n as i32) as usize) % n]);
                if geom.is_wall(r) {
                    continue;
                }
                let pair = g[r * 9 + m] + g[r * 9 + model.opposite(m)] + 2.0 * model.weights()[m];
                oracle[0] += pair * v[0] as f64;
                oracle[1] += pair * v[1] as f64;
            }
        }
    }
    let brute = max_abs_diff(&d.f_star, &oracle);
    ensure(brute <= 1e-13, format!("brute force mismatch {brute:e}"))?;
    let b = boundary_state(&model, &geom, 1).map_err(e)?;
    Ok(format!("no-wall zero, zero state = F0, overlap identity {ident:.1e} (tol 1e-12), brute force {brute:.1e}, support {}", b.support))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Check); 14] = [
        ("parameter tables", 1.0, c1_params_tables),
        ("prefactor closed forms", 10.0, c2_prefactors),
        ("HOSVD verification", 1.0, c3_hosvd),
        ("Carleman exactness", 10.0, c4_exactness),
        ("matrix-free equals assembled", 60.0, c5_matrix_free),
        ("linear-system correctness", 60.0, c6_linear_system),
        ("condition-number oracle", 300.0, c7_condition_oracle),
        ("condition scaling", 3600.0, c8_condition_scaling),
        ("eigenstate residuals", 10.0, c9_eigenstates),
        ("error convergence", 1800.0, c10_error_convergence),
        ("conservation", 10.0, c11_conservation),
        ("cost model", 60.0, c12_cost_model),
        ("gate budget", 1.0, c13_gate_budget),
        ("drag identities", 10.0, c14_drag),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        let time = format!("{secs:.2} s, budget {budget} s{}", if secs > *budget { " EXCEEDED" } else { "" });
        let outcome = outcome.and_then(|d| if secs > *budget { Err(format!("{d}; runtime over budget")) } else { Ok(d) });
        match outcome {
            Ok(detail) => println!("PASS [{n:2}] {name}: {detail} ({time})"),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{n:2}] {name}: {detail} ({time})");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
