//! Runs a harness experiment from a JSON config, as the CLI does.
//!
//! `cargo run --example run_experiment -- config.json out/`

use std::path::PathBuf;

use lbm_carleman::harness::{run, Experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::new(Experiment::GateBudget),
    };
    let out = args.next().map_or_else(|| std::env::temp_dir().join("lbm-carleman-example"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let manifest = run(&cfg, &out)?;
    for f in &manifest.outputs {
        println!("{} {} ({} bytes)", f.sha256, out.join(&f.path).display(), f.bytes);
    }
    Ok(())
}
