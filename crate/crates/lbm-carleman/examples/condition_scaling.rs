//! Condition number of the history system over a Reynolds sweep and its
//! power-law fit `kappa = c Re^chi`.

use lbm_carleman::carleman::CarlemanOperator;
use lbm_carleman::error_analysis::fit_power_law;
use lbm_carleman::lanczos::LanczosOptions;
use lbm_carleman::linear_system::{condition_number, norm_c, SystemKind, TimeBlockSystem};
use lbm_carleman::simulation::select_params;

fn main() -> anyhow::Result<()> {
    let opts = LanczosOptions::default();
    let mut points = Vec::new();
    for re in [10.0, 20.0, 50.0, 100.0, 200.0] {
        let sim = select_params(re, 0.75, 1)?;
        let op = CarlemanOperator::new(&sim.geometry()?, sim.tau_bar_star, 1)?;
        let sys = TimeBlockSystem::new(&op, SystemKind::History, sim.t_star);
        let nc = norm_c(op.model(), sim.tau_bar_star, 1, &opts)?.value;
        let est = condition_number(&sys, nc, None, &opts)?;
        println!("Re={re:6}  order {:8}  kappa={:10.3}  ({} Lanczos steps)", sys.dim(), est.kappa, est.iterations);
        points.push((re, est.kappa));
    }
    let fit = fit_power_law(&points)?;
    println!("kappa ~ {:.3} Re^{:.3}", fit.prefactor, fit.slope);
    Ok(())
}
