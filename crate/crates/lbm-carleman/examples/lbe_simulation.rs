//! Direct shifted LBE run for a D=1 sinusoidal shear wave.
//!
//! `cargo run --example lbe_simulation -- [Re]`

use lbm_carleman::lattice::{moments, VelocityModel};
use lbm_carleman::simulation::{initial_state, run_lbe, select_params, InitialKind};

fn main() -> anyhow::Result<()> {
    let re: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50.0);
    let sim = select_params(re, 0.75, 1)?;
    println!(
        "Re={re}: N_x={} T*={} tau={:.4} u_ini={:.4}",
        sim.n_x, sim.t_star, sim.tau_bar_star, sim.u_ini_star
    );
    let geom = sim.geometry()?;
    let model = VelocityModel::new(1)?;
    let g0 = initial_state(InitialKind::Sinusoidal, &sim, &geom)?;
    let traj = run_lbe(&g0, &sim, &geom)?;
    for t in (0..=sim.t_star).step_by((sim.t_star / 8).max(1)) {
        let (_, u) = moments(&traj.states[t], &model)?;
        let peak = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        println!("t={t:5}  ||g||={:.6}  max|u|={peak:.6}", traj.norms[t]);
    }
    Ok(())
}
