//! Drag on a flat wall from the momentum-exchange sum and from the overlap
//! with the boundary state.

use lbm_carleman::lattice::{LatticeGeometry, VelocityModel};
use lbm_carleman::observables::{boundary_state, drag_force};
use lbm_carleman::simulation::{initial_state, run_lbe, select_params, InitialKind};

fn main() -> anyhow::Result<()> {
    let sim = select_params(20.0, 0.75, 2)?;
    let model = VelocityModel::new(2)?;
    let mut geom = LatticeGeometry::periodic(&[sim.n_x, sim.n_x])?;
    geom.add_wall_plane(1, 0);
    let mut g0 = initial_state(InitialKind::TaylorGreen, &sim, &geom)?;
    for s in (0..geom.num_sites()).filter(|&s| geom.is_wall(s)) {
        g0[s * 9..(s + 1) * 9].fill(0.0);
    }
    let traj = run_lbe(&g0, &sim, &geom)?;
    let g = traj.states.last().expect("non-empty trajectory");
    let drag = drag_force(g, &model, &geom)?;
    println!("{} wall links, F* = {:?}", drag.num_links, drag.f_star);
    for k in 0..2 {
        let b = boundary_state(&model, &geom, k)?;
        println!(
            "k={k}: overlap {:.6e}, recovered F_{k} = {:.6e} (direct {:.6e})",
            b.overlap(g)?,
            b.force_from_overlap(g)?,
            drag.components[k]
        );
    }
    Ok(())
}
