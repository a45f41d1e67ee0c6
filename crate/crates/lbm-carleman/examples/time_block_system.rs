//! Builds the history and final-state systems for a small lattice, solves
//! them and estimates their condition numbers.

use lbm_carleman::carleman::{CarlemanOperator, CarlemanVector};
use lbm_carleman::lanczos::LanczosOptions;
use lbm_carleman::lattice::norm2;
use lbm_carleman::linear_system::{condition_number, norm_c, power_norms, SystemKind, TimeBlockSystem};
use lbm_carleman::simulation::{initial_state, select_params, InitialKind};

fn main() -> anyhow::Result<()> {
    let sim = select_params(10.0, 0.75, 1)?;
    let geom = sim.geometry()?;
    let op = CarlemanOperator::new(&geom, sim.tau_bar_star, 2)?;
    let g0 = initial_state(InitialKind::Sinusoidal, &sim, &geom)?;
    let y0 = CarlemanVector::from_state(&g0, 2, 1 << 30)?;
    let opts = LanczosOptions::default();
    let nc = norm_c(op.model(), sim.tau_bar_star, 2, &opts)?.value;
    let pn = power_norms(&op, sim.t_star, &opts)?;
    for kind in [SystemKind::History, SystemKind::Final { w: 2 }] {
        let sys = TimeBlockSystem::new(&op, kind, sim.t_star);
        let b = sys.initial_rhs(&y0)?;
        let x = sys.solve(&b)?;
        let r: Vec<f64> = sys.apply(&x)?.iter().zip(&b).map(|(a, b)| a - b).collect();
        println!("{} system: order {}, residual {:.1e}", kind.name(), sys.dim(), norm2(&r));
        let est = condition_number(&sys, nc, Some(&pn), &opts)?;
        println!(
            "  ||C||={:.4}  ||A^-1||={:.4}  kappa={:.3}  bounds [{:.3}, {}]",
            est.norm_c,
            est.norm_ainv,
            est.kappa,
            est.kappa_lower,
            est.kappa_upper.map_or("-".into(), |u| format!("{u:.3}"))
        );
    }
    Ok(())
}
