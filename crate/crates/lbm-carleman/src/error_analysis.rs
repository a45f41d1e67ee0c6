//! Carleman truncation error metrics, log-space fits and threshold detection.

use serde::{Deserialize, Serialize};

use crate::carleman::{evolve_carleman, CarlemanOperator, CarlemanVector};
use crate::error::{check_len, Error, Result};
use crate::lattice::VelocityModel;
use crate::simulation::{initial_state, run_lbe, select_params, InitialKind, SimParams};

/// Truncation error of one `(Re, N_C)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    #[serde(rename = "Re")]
    pub re: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N_C")]
    pub nc: usize,
    #[serde(rename = "epsilon_C")]
    pub epsilon_c: f64,
    pub epsilon_rmse: f64,
    /// Per-step velocity error for `t = 1..=T*`.
    pub series: Vec<f64>,
}

/// Velocity error `max_t (1/(N u_ini)) sum_r ||du(r, t)||` and its series.
pub fn epsilon_c(exact: &[Vec<f64>], approx: &[Vec<f64>], model: &VelocityModel, u_ini: f64) -> Result<(f64, Vec<f64>)> {
    check_len("trajectory length", exact.len(), approx.len())?;
    let q = model.q();
    let mut series = Vec::with_capacity(exact.len().saturating_sub(1));
    for (g, y) in exact.iter().zip(approx).skip(1) {
        check_len("state length", g.len(), y.len())?;
        let n = g.len() / q;
        let mut sum = 0.0;
        for s in 0..n {
            let (_, u) = model.moments_site(&g[s * q..(s + 1) * q]);
            let (_, v) = model.moments_site(&y[s * q..(s + 1) * q]);
            sum += (0..model.dim()).map(|i| (v[i] - u[i]).powi(2)).sum::<f64>().sqrt();
        }
        series.push(sum / (n as f64 * u_ini));
    }
    let eps = series.iter().copied().fold(0.0, f64::max);
    Ok((eps, series))
}

/// RMSE metric on the unshifted populations `f = g + w`.
///
/// Returns the error and the number of `(t, r, m)` points skipped because
/// the exact population was zero.
pub fn epsilon_rmse(exact: &[Vec<f64>], approx: &[Vec<f64>], model: &VelocityModel) -> Result<(f64, usize)> {
    check_len("trajectory length", exact.len(), approx.len())?;
    let q = model.q();
    let w = model.weights();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (g, y) in exact.iter().zip(approx).skip(1) {
        check_len("state length", g.len(), y.len())?;
        let n = g.len() / q;
        let mut mean = 0.0;
        for m in 0..q {
            let mut acc = 0.0;
            let mut count = 0usize;
            for s in 0..n {
                let f = g[s * q + m] + w[m];
                if f == 0.0 {
                    skipped += 1;
                    continue;
                }
                let ft = y[s * q + m] + w[m];
                acc += (1.0 - ft / f).powi(2);
                count += 1;
            }
            if count > 0 {
                mean += (acc / count as f64).sqrt();
            }
        }
        worst = worst.max(mean / q as f64);
    }
    Ok((worst, skipped))
}

/// Runs the direct and Carleman evolutions from one initial state and
/// measures both error metrics.
pub fn carleman_error(sim: &SimParams, kind: InitialKind, nc: usize, cap_bytes: u128) -> Result<ErrorRecord> {
    let geom = sim.geometry()?;
    let model = VelocityModel::new(sim.dim)?;
    let g0 = initial_state(kind, sim, &geom)?;
    let exact = run_lbe(&g0, sim, &geom)?;
    let op = CarlemanOperator::new(&geom, sim.tau_bar_star, nc)?;
    let y0 = CarlemanVector::from_state(&g0, nc, cap_bytes)?;
    let evo = evolve_carleman(&y0, sim.t_star, &op, false)?;
    let (epsilon_c, series) = epsilon_c(&exact.states, &evo.first_blocks, &model, sim.u_ini_star)?;
    let (epsilon_rmse, _) = epsilon_rmse(&exact.states, &evo.first_blocks, &model)?;
    Ok(ErrorRecord { re: sim.re, beta: sim.beta, dim: sim.dim, nc, epsilon_c, epsilon_rmse, series })
}

/// Convenience wrapper selecting parameters from `(Re, beta, D)`.
pub fn carleman_error_at(re: f64, beta: f64, dim: usize, kind: InitialKind, nc: usize, cap_bytes: u128) -> Result<ErrorRecord> {
    carleman_error(&select_params(re, beta, dim)?, kind, nc, cap_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `eps = E exp(Gamma N_C)`.
    ExponentialInNc,
    /// `kappa = c Re^chi`.
    PowerInRe,
}

/// Ordinary least squares line `ln y = slope x' + ln prefactor`, where
/// `x' = x` for the exponential model and `ln x` for the power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub slope: f64,
    pub prefactor: f64,
    /// Root mean square residual in log space.
    pub residual: f64,
    pub samples: Vec<(f64, f64)>,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            FitModel::ExponentialInNc => self.prefactor * (self.slope * x).exp(),
            FitModel::PowerInRe => self.prefactor * x.powf(self.slope),
        }
    }

    /// `Gamma < 0` means the truncation error shrinks with `N_C`.
    pub fn is_convergent(&self) -> bool {
        self.slope < 0.0
    }
}

/// Least squares line through `(x, y)`; returns slope, intercept, rms residual.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    check_len("fit samples", xs.len(), ys.len())?;
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidParameter("a fit needs at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok((slope, intercept, (rss / n as f64).sqrt()))
}

fn log_fit(points: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::InvalidParameter(format!("non-positive value {} cannot be fitted in log space", p.1)));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|p| match model {
            FitModel::ExponentialInNc => p.0,
            FitModel::PowerInRe => p.0.ln(),
        })
        .collect();
    if model == FitModel::PowerInRe && points.iter().any(|p| !(p.0 > 0.0)) {
        return Err(Error::InvalidParameter("power-law abscissae must be positive".into()));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&xs, &ys)?;
    Ok(FitResult { model, slope, prefactor: intercept.exp(), residual, samples: points.to_vec() })
}

/// Fits `eps = E exp(Gamma N_C)` to `(N_C, eps)` points.
pub fn fit_error_model(points: &[(f64, f64)]) -> Result<FitResult> {
    log_fit(points, FitModel::ExponentialInNc)
}

/// Fits `kappa = c Re^chi` to `(Re, kappa)` points.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    log_fit(points, FitModel::PowerInRe)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Threshold {
    Found { re_t: f64, lower: f64, upper: f64 },
    NotFoundInRange,
}

/// First Reynolds number where `eps(N_C=2) > eps(N_C=1)`, linearly
/// interpolated on the sign change of their difference.
pub fn detect_threshold(table: &[(f64, usize, f64)]) -> Result<Threshold> {
    let mut res: Vec<f64> = table.iter().map(|r| r.0).collect();
    res.sort_by(f64::total_cmp);
    res.dedup();
    let lookup = |re: f64, nc: usize| table.iter().find(|r| r.0 == re && r.1 == nc).map(|r| r.2);
    let diffs: Vec<(f64, f64)> = res
        .iter()
        .filter_map(|&re| Some((re, lookup(re, 2)? - lookup(re, 1)?)))
        .collect();
    if diffs.len() < 2 {
        return Err(Error::InvalidParameter("threshold detection needs N_C = 1 and 2 at two or more Re values".into()));
    }
    for (i, &(re, diff)) in diffs.iter().enumerate() {
        if diff > 0.0 {
            if i == 0 {
                return Ok(Threshold::Found { re_t: re, lower: re, upper: re });
            }
            let (re0, d0) = diffs[i - 1];
            let re_t = re0 + (re - re0) * (-d0) / (diff - d0);
            return Ok(Threshold::Found { re_t, lower: re0, upper: re });
        }
    }
    Ok(Threshold::NotFoundInRange)
}
