//! End-to-end resource estimate: qubits, queries, T gates and the
//! classical comparison for a D=2 flow.

use lbm_carleman::cost::{cost_report, gate_budget, reference_power_law};
use lbm_carleman::lanczos::LanczosOptions;
use lbm_carleman::lattice::VelocityModel;
use lbm_carleman::linear_system::norm_c;
use lbm_carleman::simulation::select_params;

fn main() -> anyhow::Result<()> {
    let (re, dim) = (1e4, 2);
    for nc in [1, 2] {
        let sim = select_params(re, 0.75, dim)?;
        let nrm = norm_c(&VelocityModel::new(dim)?, sim.tau_bar_star, nc, &LanczosOptions::default())?.value;
        let law = reference_power_law(dim, nc).expect("tabulated power law");
        let r = cost_report(re, 0.75, dim, nc, 10, nrm, law, 1e-2, 1e-6)?;
        println!("Re={re:e} D={dim} N_C={nc}");
        println!("  data qubits {} ({} per register), ancillas {}", r.data_qubits.ceiled, r.data_qubits.per_register, r.prefactors.n_a);
        println!("  kappa {:.3e}, queries {:.3e} (rigorous {:.3e})", r.kappa, r.query.simplified, r.query.rigorous);
        println!("  T per query {:.3e}, total {:.3e}", r.t_per_query.unwrap_or(f64::NAN), r.t_total.unwrap_or(f64::NAN));
        println!("  classical updates {:.3e}, lambda {:.3}", r.classical.q_c, r.classical.lambda);
    }
    let g = gate_budget(2, 3, 1e-6, 10, 1e6, 0.75)?;
    println!("gate ledger D=2 N_C=3: full {:.4e}, simplified {:.4e}", g.full, g.simplified);
    Ok(())
}
