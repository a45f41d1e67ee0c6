use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use lbm_carleman::harness::{run, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Run Carleman lattice Boltzmann experiments")]
struct Cli {
    #[command(subcommand)]
    experiment: Command,
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `out/<experiment>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Memory cap in bytes.
    #[arg(long, global = true)]
    max_mem: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulation parameters and Carleman dimensions.
    ParamsTable,
    /// Truncation error against the direct simulation.
    CarlemanError,
    /// Reynolds number where N_C = 2 stops beating N_C = 1.
    ThresholdScan,
    /// Condition numbers of the time-block systems and their power law.
    ConditionScaling,
    /// Block-encoding prefactor over norm ratio.
    BeRatio,
    /// Qubit, query and gate estimates.
    CostReport,
    /// T-gate ledger per query.
    GateBudget,
    /// Wall drag and its boundary-state overlap.
    DragDemo,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::ParamsTable => Experiment::ParamsTable,
            Command::CarlemanError => Experiment::CarlemanError,
            Command::ThresholdScan => Experiment::ThresholdScan,
            Command::ConditionScaling => Experiment::ConditionScaling,
            Command::BeRatio => Experiment::BeRatio,
            Command::CostReport => Experiment::CostReport,
            Command::GateBudget => Experiment::GateBudget,
            Command::DragDemo => Experiment::DragDemo,
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let experiment = Experiment::from(cli.experiment);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::new(experiment),
    };
    if cfg.experiment != experiment {
        bail!("config is for {} but the subcommand is {experiment}", cfg.experiment);
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(m) = cli.max_mem {
        cfg.max_mem = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<lbm_carleman::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

/// Prints a CSV artifact as space-aligned columns.
fn print_table(path: &std::path::Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0)).collect();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        println!("{}", line.join("  "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    let result = std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .and_then(|_| Ok(run(&cfg, &out)?));
    match result {
        Ok(manifest) => {
            for f in &manifest.outputs {
                println!("{}  {}", f.sha256, out.join(&f.path).display());
            }
            if manifest.experiment == Experiment::CostReport
                && let Err(e) = print_table(&out.join("cost_report.csv")) {
                    eprintln!("error: {e:#}");
                }
            for n in &manifest.notes {
                println!("note: {n}");
            }
            println!(
                "{}: {} points ({} reused) in {:.2} s",
                manifest.experiment, manifest.points_total, manifest.points_reused, manifest.wall_clock_seconds
            );
            for f in &manifest.failures {
                eprintln!("failed {}: {}", f.point, f.message);
            }
            ExitCode::from(manifest.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
