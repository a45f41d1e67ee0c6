//! Experiment runner: JSON configs in, CSV/JSON artifacts and a manifest out.
//!
//! Sweep points are cached as one JSON file each under
//! `points/<config hash>/`, so an interrupted sweep resumes where it stopped.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::carleman::CarlemanOperator;
use crate::cost::{be_ratio_fit, be_ratio_point, cost_report, gate_budget, reference_power_law, BeRatioPoint};
use crate::error::{Error, Result};
use crate::error_analysis::{carleman_error_at, detect_threshold, fit_error_model, fit_power_law, FitResult, Threshold};
use crate::lanczos::LanczosOptions;
use crate::lattice::{equilibrium, LatticeGeometry, VelocityModel};
use crate::linear_system::{condition_number, norm_c, power_norms, ConditionEstimate, SystemKind, TimeBlockSystem};
use crate::observables::{boundary_state, drag_force, overlap_check};
use crate::simulation::{carleman_dim, initial_state, run_lbe, select_params, InitialKind};

pub const DEFAULT_MAX_MEM: u64 = 8 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ParamsTable,
    CarlemanError,
    ThresholdScan,
    ConditionScaling,
    BeRatio,
    CostReport,
    GateBudget,
    DragDemo,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::ParamsTable,
        Experiment::CarlemanError,
        Experiment::ThresholdScan,
        Experiment::ConditionScaling,
        Experiment::BeRatio,
        Experiment::CostReport,
        Experiment::GateBudget,
        Experiment::DragDemo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ParamsTable => "params-table",
            Experiment::CarlemanError => "carleman-error",
            Experiment::ThresholdScan => "threshold-scan",
            Experiment::ConditionScaling => "condition-scaling",
            Experiment::BeRatio => "be-ratio",
            Experiment::CostReport => "cost-report",
            Experiment::GateBudget => "gate-budget",
            Experiment::DragDemo => "drag-demo",
        }
    }
}

impl Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment {s:?}")))
    }
}

/// A complete experiment description. Empty lists select per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub re: Vec<f64>,
    #[serde(default)]
    pub nc: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Waiting qubits of the final-state system and of the cost model.
    #[serde(default = "default_w")]
    pub w: u32,
    /// Gate synthesis errors for the gate budget.
    #[serde(default)]
    pub epsilon: Vec<f64>,
    /// Linear-solver error for the query bounds.
    #[serde(default = "default_eps_q")]
    pub epsilon_q: f64,
    #[serde(default)]
    pub initial: Option<InitialKind>,
    /// Relaxation time for the block-encoding study.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Use the final-state system with `w` waiting qubits instead of the history system.
    #[serde(default)]
    pub final_state: bool,
    /// Also compute `||(S C)^t||` for the condition-number upper bound.
    #[serde(default)]
    pub power_norms: bool,
    /// Condition-number power law `kappa = c Re^chi` overriding the reference table.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub chi: Option<f64>,
    /// Lattice sizes for the drag overlap trend.
    #[serde(default)]
    pub drag_sizes: Vec<usize>,
    #[serde(default = "default_max_mem")]
    pub max_mem: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory, overridden by the command line.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_beta() -> f64 {
    0.75
}
fn default_w() -> u32 {
    10
}
fn default_eps_q() -> f64 {
    1e-2
}
fn default_max_mem() -> u64 {
    DEFAULT_MAX_MEM
}
fn default_max_iter() -> usize {
    400
}
fn default_tol() -> f64 {
    1e-8
}
fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if let Some(d) = self.dims.iter().find(|d| !(1..=3).contains(*d)) {
            return bad(format!("dimension {d} not in 1..=3"));
        }
        if let Some(r) = self.re.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return bad(format!("Reynolds number {r} must be positive"));
        }
        if self.nc.contains(&0) {
            return bad("N_C values start at 1".into());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta {} outside (0, 1]", self.beta));
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("gate error {e} outside (0, 1)"));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("Lanczos tolerance and iteration cap must be positive".into());
        }
        if self.c.is_some() != self.chi.is_some() {
            return bad("c and chi must be given together".into());
        }
        Ok(())
    }

    fn lanczos(&self) -> LanczosOptions {
        LanczosOptions { tol: self.tol, max_iter: self.max_iter, max_basis_bytes: self.max_mem as u128 / 2, ..Default::default() }
    }

    fn dims_or(&self, default: &[usize]) -> Vec<usize> {
        if self.dims.is_empty() { default.to_vec() } else { self.dims.clone() }
    }

    fn re_or(&self, default: &[f64]) -> Vec<f64> {
        if self.re.is_empty() { default.to_vec() } else { self.re.clone() }
    }

    fn nc_or(&self, default: &[usize]) -> Vec<usize> {
        if self.nc.is_empty() { default.to_vec() } else { self.nc.clone() }
    }

    /// Hash of everything that can change a result. Worker count and output
    /// directory are excluded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.out = None;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

/// A sweep point that did not produce a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: serde_json::Value,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub crate_version: String,
    pub outputs: Vec<OutputFile>,
    pub points_total: usize,
    pub points_reused: usize,
    pub failures: Vec<PointFailure>,
    pub notes: Vec<String>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

impl Manifest {
    /// 0 when every point succeeded, otherwise the code of the first failure.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.exit_code)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    cache: PathBuf,
    outputs: Vec<OutputFile>,
    failures: Vec<PointFailure>,
    notes: Vec<String>,
    total: usize,
    reused: AtomicUsize,
}

#[derive(Serialize, Deserialize)]
struct CachedPoint<P, R> {
    point: P,
    result: R,
}

impl<'a> Runner<'a> {
    /// Evaluates `f` on every point with a shared work queue, reusing cached
    /// results. Failed points are recorded and left out of the returned list.
    fn sweep<P, R, F>(&mut self, points: Vec<P>, f: F) -> Result<Vec<(P, R)>>
    where
        P: Serialize + DeserializeOwned + Sync + Send + Clone,
        R: Serialize + DeserializeOwned + Send,
        F: Fn(&P) -> Result<R> + Sync,
    {
        self.total += points.len();
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<std::result::Result<R, PointFailure>>>> =
            Mutex::new((0..points.len()).map(|_| None).collect());
        let fatal: Mutex<Option<Error>> = Mutex::new(None);
        let work = || {
            loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= points.len() {
                    break;
                }
                let p = &points[i];
                let outcome = self.point(p, &f);
                match outcome {
                    Ok(r) => slots.lock().unwrap()[i] = Some(r),
                    Err(e) => {
                        *fatal.lock().unwrap() = Some(e);
                        break;
                    }
                }
            }
        };
        std::thread::scope(|s| {
            for _ in 0..self.cfg.workers.min(points.len()).max(1) {
                s.spawn(work);
            }
        });
        if let Some(e) = fatal.into_inner().unwrap() {
            return Err(e);
        }
        let mut done = Vec::new();
        for (p, slot) in points.into_iter().zip(slots.into_inner().unwrap()) {
            match slot {
                Some(Ok(r)) => done.push((p, r)),
                Some(Err(fail)) => self.failures.push(fail),
                None => {}
            }
        }
        Ok(done)
    }

    /// One point: cache hit, fresh result, or a recorded failure. Only I/O
    /// errors are fatal.
    fn point<P, R, F>(&self, p: &P, f: &F) -> Result<std::result::Result<R, PointFailure>>
    where
        P: Serialize + DeserializeOwned + Clone,
        R: Serialize + DeserializeOwned,
        F: Fn(&P) -> Result<R>,
    {
        let key = serde_json::to_value(p)?;
        let file = self.cache.join(format!("{}.json", &sha256_hex(key.to_string().as_bytes())[..16]));
        if let Ok(text) = fs::read_to_string(&file)
            && let Ok(hit) = serde_json::from_str::<CachedPoint<serde_json::Value, R>>(&text)
                && hit.point == key {
                    self.reused.fetch_add(1, Ordering::SeqCst);
                    return Ok(Ok(hit.result));
                }
        match f(p) {
            Ok(result) => {
                let body = serde_json::to_vec_pretty(&CachedPoint { point: p.clone(), result })?;
                write_atomic(&file, &body)?;
                let hit: CachedPoint<P, R> = serde_json::from_slice(&body)?;
                Ok(Ok(hit.result))
            }
            Err(e @ (Error::Io(_) | Error::Json(_) | Error::Csv(_))) => Err(e),
            Err(e) => Ok(Err(PointFailure { point: key, exit_code: e.exit_code(), message: e.to_string() })),
        }
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write_file(name, &bytes)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_file(name, &bytes)
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.out.join(name), bytes)?;
        self.outputs.push(OutputFile { path: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Four decimals, ties rounded away from zero.
pub fn fmt4(x: f64) -> String {
    format!("{:.4}", (x * 1e4).round() / 1e4)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Runs one experiment, writing artifacts and `manifest.json` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let hash = cfg.content_hash();
    let cache = out_dir.join("points").join(&hash[..16]);
    fs::create_dir_all(&cache)?;
    let mut r = Runner {
        cfg,
        out: out_dir.to_path_buf(),
        cache,
        outputs: Vec::new(),
        failures: Vec::new(),
        notes: Vec::new(),
        total: 0,
        reused: AtomicUsize::new(0),
    };
    match cfg.experiment {
        Experiment::ParamsTable => params_table(&mut r)?,
        Experiment::CarlemanError => carleman_error(&mut r, "carleman_error")?,
        Experiment::ThresholdScan => threshold_scan(&mut r)?,
        Experiment::ConditionScaling => condition_scaling(&mut r)?,
        Experiment::BeRatio => be_ratio(&mut r)?,
        Experiment::CostReport => cost(&mut r)?,
        Experiment::GateBudget => gates(&mut r)?,
        Experiment::DragDemo => drag_demo(&mut r)?,
    }
    let manifest = Manifest {
        experiment: cfg.experiment,
        config: cfg.clone(),
        config_sha256: hash,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        outputs: r.outputs,
        points_total: r.total,
        points_reused: r.reused.into_inner(),
        failures: r.failures,
        notes: r.notes,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&out_dir.join("manifest.json"), &bytes)?;
    Ok(manifest)
}

/// `(D, N_C, Re)` rows of the published parameter tables.
pub const PARAMS_TABLE_ROWS: [(usize, usize, f64); 13] = [
    (1, 1, 1000.0),
    (1, 2, 200.0),
    (1, 2, 1000.0),
    (1, 3, 100.0),
    (1, 3, 500.0),
    (1, 4, 30.0),
    (1, 4, 150.0),
    (1, 5, 50.0),
    (2, 1, 100.0),
    (2, 1, 250.0),
    (2, 2, 20.0),
    (2, 2, 150.0),
    (2, 3, 20.0),
];

/// Columns: `D,N_C,Re,beta,N_x,T_star,tau_bar_star,u_ini_star,dim_C,dim_A_H`.
fn params_table(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let mut rows: Vec<(usize, usize, f64)> = if cfg.re.is_empty() && cfg.nc.is_empty() && cfg.dims.is_empty() {
        PARAMS_TABLE_ROWS.to_vec()
    } else {
        let mut v = Vec::new();
        for d in cfg.dims_or(&[1, 2]) {
            for nc in cfg.nc_or(&[1]) {
                for re in cfg.re_or(&[100.0]) {
                    v.push((d, nc, re));
                }
            }
        }
        v
    };
    rows.dedup();
    let mut out = Vec::new();
    for (d, nc, re) in rows {
        let sim = select_params(re, cfg.beta, d).map_err(|e| e.at_point(re, nc))?;
        let dim_c = carleman_dim(sim.state_dim(), nc as u32);
        out.push(vec![
            d.to_string(),
            nc.to_string(),
            fmt(re),
            fmt(cfg.beta),
            sim.n_x.to_string(),
            sim.t_star.to_string(),
            fmt4(sim.tau_bar_star),
            fmt4(sim.u_ini_star),
            dim_c.to_string(),
            (dim_c * (sim.t_star as u128 + 1)).to_string(),
        ]);
    }
    r.total += out.len();
    r.write_csv(
        "params.csv",
        &["D", "N_C", "Re", "beta", "N_x", "T_star", "tau_bar_star", "u_ini_star", "dim_C", "dim_A_H"],
        &out,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ErrorPoint {
    dim: usize,
    re: f64,
    nc: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ErrorValue {
    epsilon_c: f64,
    epsilon_rmse: f64,
    series: Vec<f64>,
}

fn default_initial(dim: usize) -> InitialKind {
    if dim == 1 { InitialKind::Sinusoidal } else { InitialKind::TaylorGreen }
}

fn error_sweep(r: &mut Runner, res: &[f64], ncs: &[usize]) -> Result<Vec<(ErrorPoint, ErrorValue)>> {
    let cfg = r.cfg;
    let mut points = Vec::new();
    for dim in cfg.dims_or(&[1]) {
        for &re in res {
            for &nc in ncs {
                points.push(ErrorPoint { dim, re, nc });
            }
        }
    }
    r.sweep(points, |p| {
        let kind = cfg.initial.unwrap_or(default_initial(p.dim));
        let rec = carleman_error_at(p.re, cfg.beta, p.dim, kind, p.nc, cfg.max_mem as u128).map_err(|e| e.at_point(p.re, p.nc))?;
        Ok(ErrorValue { epsilon_c: rec.epsilon_c, epsilon_rmse: rec.epsilon_rmse, series: rec.series })
    })
}

fn write_error_tables(r: &mut Runner, stem: &str, done: &[(ErrorPoint, ErrorValue)]) -> Result<()> {
    let beta = r.cfg.beta;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(p, v)| vec![p.dim.to_string(), fmt(p.re), fmt(beta), p.nc.to_string(), fmt(v.epsilon_c), fmt(v.epsilon_rmse)])
        .collect();
    r.write_csv(&format!("{stem}.csv"), &["D", "Re", "beta", "N_C", "epsilon_C", "epsilon_RMSE"], &rows)?;
    let mut series = Vec::new();
    for (p, v) in done {
        for (t, e) in v.series.iter().enumerate() {
            series.push(vec![p.dim.to_string(), fmt(p.re), p.nc.to_string(), (t + 1).to_string(), fmt(*e)]);
        }
    }
    r.write_csv(&format!("{stem}_series.csv"), &["D", "Re", "N_C", "t", "epsilon_C_t"], &series)
}

#[derive(Serialize)]
struct ErrorFit {
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "Re")]
    re: f64,
    fit: FitResult,
}

/// Columns: `D,Re,beta,N_C,epsilon_C,epsilon_RMSE`; series `D,Re,N_C,t,epsilon_C_t`.
fn carleman_error(r: &mut Runner, stem: &str) -> Result<()> {
    let res = r.cfg.re_or(&[20.0, 50.0, 200.0]);
    let ncs = r.cfg.nc_or(&[1, 2, 3]);
    let done = error_sweep(r, &res, &ncs)?;
    write_error_tables(r, stem, &done)?;
    let mut groups: BTreeMap<(usize, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for (p, v) in &done {
        groups.entry((p.dim, p.re.to_bits())).or_default().push((p.nc as f64, v.epsilon_c));
    }
    let mut fits = Vec::new();
    for ((dim, re), pts) in groups {
        let re = f64::from_bits(re);
        match fit_error_model(&pts) {
            Ok(fit) => fits.push(ErrorFit { dim, re, fit }),
            Err(e) => r.notes.push(format!("no fit at D={dim}, Re={re}: {e}")),
        }
    }
    r.write_json(&format!("{stem}_fits.json"), &fits)
}

#[derive(Serialize)]
struct ThresholdRow {
    #[serde(rename = "D")]
    dim: usize,
    threshold: Threshold,
}

fn threshold_scan(r: &mut Runner) -> Result<()> {
    let res = r.cfg.re_or(&[20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]);
    let ncs = r.cfg.nc_or(&[1, 2]);
    let done = error_sweep(r, &res, &ncs)?;
    write_error_tables(r, "threshold_scan", &done)?;
    let mut out = Vec::new();
    for dim in r.cfg.dims_or(&[1]) {
        let table: Vec<_> = done.iter().filter(|(p, _)| p.dim == dim).map(|(p, v)| (p.re, p.nc, v.epsilon_c)).collect();
        match detect_threshold(&table) {
            Ok(threshold) => out.push(ThresholdRow { dim, threshold }),
            Err(e) => r.notes.push(format!("no threshold for D={dim}: {e}")),
        }
    }
    r.write_json("threshold.json", &out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KappaPoint {
    dim: usize,
    re: f64,
    nc: usize,
}

#[derive(Serialize)]
struct KappaFit {
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "N_C")]
    nc: usize,
    fit: FitResult,
}

/// Columns: `D,Re,beta,N_C,kind,W,N_x,T_star,dim_A,norm_C,norm_A_upper,norm_Ainv,kappa,kappa_lower,kappa_upper,iterations,converged`.
fn condition_scaling(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let kind = if cfg.final_state { SystemKind::Final { w: cfg.w } } else { SystemKind::History };
    let mut points = Vec::new();
    for dim in cfg.dims_or(&[1]) {
        for nc in cfg.nc_or(&[1]) {
            for re in cfg.re_or(&[10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]) {
                points.push(KappaPoint { dim, re, nc });
            }
        }
    }
    let opts = cfg.lanczos();
    let done = r.sweep(points, |p| {
        let at = |e: Error| e.at_point(p.re, p.nc);
        let sim = select_params(p.re, cfg.beta, p.dim).map_err(at)?;
        let geom = sim.geometry().map_err(at)?;
        let op = CarlemanOperator::new(&geom, sim.tau_bar_star, p.nc).map_err(at)?;
        let system = TimeBlockSystem::new(&op, kind, sim.t_star);
        // Krylov basis aside, the solves hold about six system-sized vectors.
        let needed = system.dim() as u128 * 8 * 6;
        if needed > cfg.max_mem as u128 {
            return Err(at(Error::Capacity { what: format!("time-block system of order {}", system.dim()), needed, cap: cfg.max_mem as u128 }));
        }
        let nc_norm = norm_c(op.model(), sim.tau_bar_star, p.nc, &opts).map_err(at)?.value;
        let pn = if cfg.power_norms { Some(power_norms(&op, sim.t_star, &opts).map_err(at)?) } else { None };
        let mut est = condition_number(&system, nc_norm, pn.as_deref(), &opts).map_err(at)?;
        est.re = p.re;
        est.beta = cfg.beta;
        Ok((est, sim.n_x, sim.t_star, system.dim()))
    })?;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(p, (e, n_x, t_star, dim_a)): &(KappaPoint, (ConditionEstimate, usize, usize, usize))| {
            vec![
                p.dim.to_string(),
                fmt(p.re),
                fmt(e.beta),
                p.nc.to_string(),
                e.kind.clone(),
                e.w.map(|w| w.to_string()).unwrap_or_default(),
                n_x.to_string(),
                t_star.to_string(),
                dim_a.to_string(),
                fmt(e.norm_c),
                fmt(e.norm_a_upper),
                fmt(e.norm_ainv),
                fmt(e.kappa),
                fmt(e.kappa_lower),
                fmt_opt(e.kappa_upper),
                e.iterations.to_string(),
                e.converged.to_string(),
            ]
        })
        .collect();
    r.write_csv(
        "condition.csv",
        &[
            "D", "Re", "beta", "N_C", "kind", "W", "N_x", "T_star", "dim_A", "norm_C", "norm_A_upper", "norm_Ainv", "kappa",
            "kappa_lower", "kappa_upper", "iterations", "converged",
        ],
        &rows,
    )?;
    let mut groups: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for (p, (e, ..)) in &done {
        groups.entry((p.dim, p.nc)).or_default().push((p.re, e.kappa));
    }
    let mut fits = Vec::new();
    for ((dim, nc), pts) in groups {
        match fit_power_law(&pts) {
            Ok(fit) => fits.push(KappaFit { dim, nc, fit }),
            Err(e) => r.notes.push(format!("no power law for D={dim}, N_C={nc}: {e}")),
        }
    }
    r.write_json("condition_fits.json", &fits)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BePoint {
    dim: usize,
    tau: f64,
    nc: usize,
}

#[derive(Serialize)]
struct BeFit {
    #[serde(rename = "D")]
    dim: usize,
    tau: f64,
    slope_a: f64,
    prefactor_b: f64,
    fit: FitResult,
}

/// Default `N_C` grid of the block-encoding study for each dimension.
pub fn be_ratio_grid(dim: usize) -> Vec<usize> {
    match dim {
        1 => (1..=8).collect(),
        2 => (1..=6).collect(),
        _ => (1..=4).collect(),
    }
}

/// Columns: `D,tau,N_C,norm_C,alpha_C,be_ratio,iterations,converged`.
fn be_ratio(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let tau = cfg.tau.unwrap_or(0.5);
    let mut points = Vec::new();
    for dim in cfg.dims_or(&[1, 2, 3]) {
        for nc in if cfg.nc.is_empty() { be_ratio_grid(dim) } else { cfg.nc.clone() } {
            points.push(BePoint { dim, tau, nc });
        }
    }
    let opts = cfg.lanczos();
    let done = r.sweep(points, |p| be_ratio_point(p.dim, p.tau, p.nc, &opts).map_err(|e| e.at_point(f64::NAN, p.nc)))?;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(p, b): &(BePoint, BeRatioPoint)| {
            vec![
                p.dim.to_string(),
                fmt(p.tau),
                p.nc.to_string(),
                fmt(b.norm_c),
                fmt(b.alpha_c),
                fmt(b.be_ratio),
                b.lanczos_iterations.to_string(),
                b.converged.to_string(),
            ]
        })
        .collect();
    r.write_csv("be_ratio.csv", &["D", "tau", "N_C", "norm_C", "alpha_C", "be_ratio", "iterations", "converged"], &rows)?;
    let mut fits = Vec::new();
    for dim in cfg.dims_or(&[1, 2, 3]) {
        let pts: Vec<BeRatioPoint> = done.iter().filter(|(p, _)| p.dim == dim).map(|(_, b)| b.clone()).collect();
        match be_ratio_fit(&pts) {
            Ok(fit) => fits.push(BeFit { dim, tau, slope_a: fit.slope, prefactor_b: fit.prefactor, fit }),
            Err(e) => r.notes.push(format!("no block-encoding fit for D={dim}: {e}")),
        }
    }
    r.write_json("be_ratio_fits.json", &fits)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostPoint {
    dim: usize,
    re: f64,
    nc: usize,
    c: f64,
    chi: f64,
    epsilon: f64,
}

/// Columns of `cost_report.csv` are the header below; `lambda.csv` has `D,beta,chi,lambda,lambda_with_measurement`.
fn cost(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let epsilon = cfg.epsilon.first().copied().unwrap_or(1e-6);
    let mut points = Vec::new();
    for dim in cfg.dims_or(&[1, 2]) {
        for nc in cfg.nc_or(&[1, 2, 3, 4]) {
            let law = match (cfg.c, cfg.chi) {
                (Some(c), Some(chi)) => Some((c, chi)),
                _ => reference_power_law(dim, nc),
            };
            let Some((c, chi)) = law else {
                r.notes.push(format!("no condition-number power law for D={dim}, N_C={nc}; points omitted"));
                continue;
            };
            for re in cfg.re_or(&[1e2, 1e3, 1e4, 1e5, 1e6]) {
                points.push(CostPoint { dim, re, nc, c, chi, epsilon });
            }
        }
    }
    let opts = cfg.lanczos();
    let done = r.sweep(points, |p| {
        let at = |e: Error| e.at_point(p.re, p.nc);
        let sim = select_params(p.re, cfg.beta, p.dim).map_err(at)?;
        let model = VelocityModel::new(p.dim)?;
        let nc_norm = norm_c(&model, sim.tau_bar_star, p.nc, &opts).map_err(at)?.value;
        cost_report(p.re, cfg.beta, p.dim, p.nc, cfg.w, nc_norm, (p.c, p.chi), cfg.epsilon_q, p.epsilon).map_err(at)
    })?;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(p, c)| {
            vec![
                p.dim.to_string(),
                fmt(p.re),
                fmt(c.beta),
                p.nc.to_string(),
                c.w.to_string(),
                fmt(c.prefactors.tau_bar_star),
                fmt(c.data_qubits.raw),
                c.data_qubits.ceiled.to_string(),
                c.data_qubits.per_register.to_string(),
                c.prefactors.n_a.to_string(),
                fmt(c.prefactors.alpha_c),
                fmt(c.norm_c),
                fmt(c.kappa),
                fmt(p.c),
                fmt(p.chi),
                fmt(c.query.rigorous),
                fmt(c.query.simplified),
                fmt(c.query_lower_proxy),
                fmt(c.query_upper_re),
                fmt(c.measurement_overhead),
                fmt(c.classical.q_c),
                fmt_opt(c.t_per_query),
                fmt_opt(c.t_total),
            ]
        })
        .collect();
    r.write_csv(
        "cost_report.csv",
        &[
            "D", "Re", "beta", "N_C", "W", "tau_bar_star", "n_D_raw", "n_D", "n_D_per_register", "n_A", "alpha_C", "norm_C",
            "kappa", "c", "chi", "q_rigorous", "q_simplified", "q_lower_proxy", "q_upper_Re", "q_M", "q_C", "T_per_query",
            "T_total",
        ],
        &rows,
    )?;
    let mut lambda = BTreeMap::new();
    for (p, c) in &done {
        lambda.entry((p.dim, p.chi.to_bits())).or_insert_with(|| {
            vec![
                p.dim.to_string(),
                fmt(c.beta),
                fmt(p.chi),
                format!("{:.3}", c.classical.lambda),
                format!("{:.3}", c.classical.lambda_with_measurement),
            ]
        });
    }
    let lambda: Vec<_> = lambda.into_values().collect();
    r.write_csv("lambda.csv", &["D", "beta", "chi", "lambda", "lambda_with_measurement"], &lambda)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GatePoint {
    dim: usize,
    nc: usize,
    epsilon: f64,
    re: f64,
}

/// Columns: `D,N_C,epsilon,W,Re,beta,T_full,T_full_explicit_sums,T_simplified,epsilon_total,relative_gap`.
fn gates(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    let eps = if cfg.epsilon.is_empty() { vec![1e-6] } else { cfg.epsilon.clone() };
    let mut points = Vec::new();
    for dim in cfg.dims_or(&[1, 2]) {
        for nc in cfg.nc_or(&[1, 2, 3, 4, 5]) {
            for &epsilon in &eps {
                for re in cfg.re_or(&[1e6]) {
                    points.push(GatePoint { dim, nc, epsilon, re });
                }
            }
        }
    }
    let done = r.sweep(points, |p| gate_budget(p.dim, p.nc, p.epsilon, cfg.w, p.re, cfg.beta).map_err(|e| e.at_point(p.re, p.nc)))?;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(p, g)| {
            vec![
                p.dim.to_string(),
                p.nc.to_string(),
                fmt(p.epsilon),
                cfg.w.to_string(),
                fmt(p.re),
                fmt(cfg.beta),
                fmt(g.full),
                fmt(g.full_explicit_sums),
                fmt(g.simplified),
                fmt(g.epsilon_total),
                fmt((g.full - g.simplified).abs() / g.full),
            ]
        })
        .collect();
    r.write_csv(
        "gate_budget.csv",
        &["D", "N_C", "epsilon", "W", "Re", "beta", "T_full", "T_full_explicit_sums", "T_simplified", "epsilon_total", "relative_gap"],
        &rows,
    )?;
    let detail: Vec<_> = done.into_iter().map(|(_, g)| g).collect();
    r.write_json("gate_budget.json", &detail)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DragPoint {
    re: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DragSummary {
    #[serde(rename = "Re")]
    re: f64,
    #[serde(rename = "N_x")]
    n_x: usize,
    #[serde(rename = "T_star")]
    t_star: usize,
    initial: InitialKind,
    drag: crate::observables::DragResult,
    overlaps: Vec<f64>,
    normalizations: Vec<f64>,
    state_norm: f64,
    overlap_identity_error: f64,
    random_state_identity_error: f64,
}

/// D=2 periodic box with a flat wall in the plane `y = 0`.
fn walled_box(n: usize) -> Result<LatticeGeometry> {
    let mut geom = LatticeGeometry::periodic(&[n, n])?;
    geom.add_wall_plane(1, 0);
    Ok(geom)
}

/// Equilibrium state with uniform `u_x` and a step in `u_y` across the box,
/// used for the overlap size trend.
pub fn drag_trend_state(geom: &LatticeGeometry) -> Result<Vec<f64>> {
    let model = VelocityModel::new(geom.dim())?;
    let half = geom.sizes()[1] / 2;
    let n = geom.num_sites();
    let mut u = vec![0.0; 2 * n];
    for s in 0..n {
        u[2 * s] = 0.05;
        u[2 * s + 1] = if geom.coords(s)[1] >= half { 0.03 } else { 0.0 };
    }
    let mut g = equilibrium(&vec![0.01; n], &u, &model)?;
    zero_walls(&mut g, geom, model.q());
    Ok(g)
}

fn zero_walls(g: &mut [f64], geom: &LatticeGeometry, q: usize) {
    for s in 0..geom.num_sites() {
        if geom.is_wall(s) {
            g[s * q..(s + 1) * q].fill(0.0);
        }
    }
}

/// `drag.json` for the evolved state; `overlap_trend.csv` columns `N_x,links,overlap_x,overlap_y`.
fn drag_demo(r: &mut Runner) -> Result<()> {
    let cfg = r.cfg;
    if cfg.dims.iter().any(|&d| d != 2) {
        return Err(Error::InvalidParameter("drag-demo runs on a D=2 lattice".into()));
    }
    let kind = cfg.initial.unwrap_or(InitialKind::TaylorGreen);
    let points: Vec<DragPoint> = cfg.re_or(&[20.0]).into_iter().map(|re| DragPoint { re }).collect();
    let seed = cfg.seed;
    let done = r.sweep(points, |p| {
        let sim = select_params(p.re, cfg.beta, 2)?;
        let model = VelocityModel::new(2)?;
        let geom = walled_box(sim.n_x)?;
        let mut g0 = initial_state(kind, &sim, &geom)?;
        zero_walls(&mut g0, &geom, model.q());
        let traj = run_lbe(&g0, &sim, &geom)?;
        let g = traj.states.last().expect("trajectory has the initial state");
        let drag = drag_force(g, &model, &geom)?.with_physical(&sim, 1.0);
        let mut overlaps = Vec::new();
        let mut normalizations = Vec::new();
        for k in 0..2 {
            let b = boundary_state(&model, &geom, k)?;
            overlaps.push(b.overlap(g)?);
            normalizations.push(b.normalization);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
        Ok(DragSummary {
            re: p.re,
            n_x: sim.n_x,
            t_star: sim.t_star,
            initial: kind,
            overlap_identity_error: overlap_check(g, &model, &geom)?,
            random_state_identity_error: overlap_check(&random, &model, &geom)?,
            state_norm: crate::lattice::norm2(g),
            drag,
            overlaps,
            normalizations,
        })
    })?;
    let summaries: Vec<_> = done.into_iter().map(|(_, s)| s).collect();
    r.write_json("drag.json", &summaries)?;

    let sizes = if cfg.drag_sizes.is_empty() { vec![8, 16, 32, 64] } else { cfg.drag_sizes.clone() };
    let model = VelocityModel::new(2)?;
    let mut rows = Vec::new();
    for n in sizes {
        let geom = walled_box(n)?;
        let g = drag_trend_state(&geom)?;
        let d = drag_force(&g, &model, &geom)?;
        let ox = boundary_state(&model, &geom, 0)?.overlap(&g)?;
        let oy = boundary_state(&model, &geom, 1)?.overlap(&g)?;
        rows.push(vec![n.to_string(), d.num_links.to_string(), fmt(ox), fmt(oy)]);
    }
    r.write_csv("overlap_trend.csv", &["N_x", "links", "overlap_x", "overlap_y"], &rows)
}
