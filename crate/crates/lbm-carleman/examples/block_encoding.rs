//! Block-encoding prefactors, the tabulated HOSVD of the quadratic
//! collision matrix and the prefactor-to-norm ratio over `N_C`.

use lbm_carleman::cost::{be_ratio_sweep, prefactors, verify_hosvd};
use lbm_carleman::lanczos::LanczosOptions;

fn main() -> anyhow::Result<()> {
    for dim in [1, 2] {
        let h = verify_hosvd(dim, 1.0)?;
        println!("D={dim} HOSVD: reconstruction {:.1e}, unitarity {:.1e}", h.reconstruction, h.unitarity);
    }
    let p = prefactors(0.6, 2, 3)?;
    println!(
        "D=2 tau=0.6 N_C=3: alpha_I+F1={:.4} alpha_F2={:.4} alpha_C={:.3} ancillas={}",
        p.alpha_if1, p.alpha_f2bar, p.alpha_c, p.n_a
    );
    let ncs: Vec<usize> = (1..=6).collect();
    let (points, fit) = be_ratio_sweep(1, 0.5, &ncs, &LanczosOptions::default())?;
    for pt in &points {
        println!("N_C={}: ||C||={:.4} alpha_C={:.4} ratio={:.4}", pt.nc, pt.norm_c, pt.alpha_c, pt.be_ratio);
    }
    println!("ratio ~ {:.3} exp({:.3} N_C)", fit.prefactor, fit.slope);
    Ok(())
}
