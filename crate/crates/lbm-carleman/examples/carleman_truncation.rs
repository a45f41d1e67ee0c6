//! Carleman truncation error against the direct LBE for increasing `N_C`.
//!
//! `cargo run --example carleman_truncation -- [Re]`

use lbm_carleman::error_analysis::{carleman_error_at, fit_error_model};
use lbm_carleman::simulation::InitialKind;

fn main() -> anyhow::Result<()> {
    let re: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20.0);
    let mut points = Vec::new();
    for nc in 1..=3 {
        let rec = carleman_error_at(re, 0.75, 1, InitialKind::Sinusoidal, nc, 4 << 30)?;
        println!("N_C={nc}: eps_C={:.4e}  eps_RMSE={:.4e}", rec.epsilon_c, rec.epsilon_rmse);
        points.push((nc as f64, rec.epsilon_c));
    }
    let fit = fit_error_model(&points)?;
    println!(
        "eps_C ~ {:.3} exp({:.3} N_C), {}",
        fit.prefactor,
        fit.slope,
        if fit.is_convergent() { "converging" } else { "diverging" }
    );
    Ok(())
}
