//! Reynolds-number driven parameter selection, initial states and the
//! direct shifted LBE stepper used as ground truth.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::{check_tau, collide_unchecked, equilibrium, norm2, LatticeGeometry, StreamingMap, VelocityModel};

/// Physical length and viscosity from which grid spacing and time step follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalAnchors {
    pub length: f64,
    pub viscosity: f64,
}

/// Free scaling constants of the parameter choice. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub eta_u: f64,
    pub eta_l: f64,
    pub eta_t: f64,
    pub u0_star: f64,
}

impl Default for ScalingConstants {
    fn default() -> Self {
        Self { eta_u: 1.0, eta_l: 1.0, eta_t: 1.0, u0_star: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub re: f64,
    pub beta: f64,
    pub dim: usize,
    pub scaling: ScalingConstants,
    pub n_x: usize,
    pub t_star: usize,
    pub tau_bar_star: f64,
    pub u_ini_star: f64,
    pub anchors: Option<PhysicalAnchors>,
}

/// Ceiling that forgives floating point noise just above an integer.
pub fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { x.ceil() }
}

pub fn select_params(re: f64, beta: f64, dim: usize) -> Result<SimParams> {
    select_params_with(re, beta, dim, ScalingConstants::default())
}

pub fn select_params_with(re: f64, beta: f64, dim: usize, k: ScalingConstants) -> Result<SimParams> {
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(re >= 1.0 && re.is_finite()) {
        return Err(Error::InvalidParameter(format!("Reynolds number {re} must be at least 1")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("resolution exponent {beta} must be positive")));
    }
    let half_d = dim as f64 / 2.0;
    let n_x = ceil_tolerant(re.powf(beta) / k.eta_l) as usize;
    let t_star = ceil_tolerant(
        re.powf(beta * (half_d + 1.0)) / (k.eta_t * k.eta_u * k.eta_l.powf(half_d) * k.u0_star),
    ) as usize;
    let tau_bar_star =
        0.5 + 3.0 * k.u0_star * k.eta_l.powf(half_d) * k.eta_u / re.powf(beta * (half_d - 1.0) + 1.0);
    check_tau(tau_bar_star)?;
    let u_ini_star = k.u0_star * (n_x as f64).powf(-half_d);
    Ok(SimParams {
        re,
        beta,
        dim,
        scaling: k,
        n_x: n_x.max(1),
        t_star: t_star.max(1),
        tau_bar_star,
        u_ini_star,
        anchors: None,
    })
}

impl SimParams {
    pub fn num_sites(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    pub fn q(&self) -> usize {
        3usize.pow(self.dim as u32)
    }

    /// Length of the single-time state vector, `d = N Q`.
    pub fn state_dim(&self) -> usize {
        self.num_sites() * self.q()
    }

    pub fn geometry(&self) -> Result<LatticeGeometry> {
        LatticeGeometry::periodic(&vec![self.n_x; self.dim])
    }

    /// Grid spacing `L / (eta_L N_x)` when anchors are present.
    pub fn delta_x(&self) -> Option<f64> {
        self.anchors.map(|a| a.length / (self.scaling.eta_l * self.n_x as f64))
    }

    /// Time step from the viscosity relation `nu = (tau - 1/2)/3 dx^2/dt`.
    pub fn delta_t(&self) -> Option<f64> {
        let dx = self.delta_x()?;
        self.anchors.map(|a| (self.tau_bar_star - 0.5) / 3.0 * dx * dx / a.viscosity)
    }
}

/// Length of a Carleman vector, `d (d^N_C - 1) / (d - 1)`.
pub fn carleman_dim(d: usize, n_c: u32) -> u128 {
    (1..=n_c).map(|k| (d as u128).pow(k)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    Sinusoidal,
    Colliding { phi: f64 },
    TaylorGreen,
    GaussianDipole { s: f64, sigma: f64 },
}

/// Equilibrium initial state with zero density fluctuation and a velocity
/// field scaled by `u_ini_star`.
///
/// The 2D families sample the analytic fields at `r_i = -pi + 2 pi r*_i / N_i`
/// with `r*_i = 1..N_i`.
pub fn initial_state(kind: InitialKind, sim: &SimParams, geom: &LatticeGeometry) -> Result<Vec<f64>> {
    let model = VelocityModel::new(geom.dim())?;
    let n = geom.num_sites();
    let d = geom.dim();
    let u0 = sim.u_ini_star;
    let mut u = vec![0.0; n * d];
    let need = |want: usize| {
        if d == want {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("initial state {kind:?} needs D={want}, lattice has D={d}")))
        }
    };
    match kind {
        InitialKind::Sinusoidal => {
            need(1)?;
            let nx = geom.sizes()[0] as f64;
            for (i, ui) in u.iter_mut().enumerate() {
                *ui = u0 * (2.0 * PI * (i + 1) as f64 / nx).sin();
            }
        }
        InitialKind::Colliding { phi } => {
            need(1)?;
            if !(phi > 0.0 && phi <= 0.5) {
                return Err(Error::InvalidParameter(format!("fraction {phi} outside (0, 1/2]")));
            }
            let nx = geom.sizes()[0];
            let c = ceil_tolerant(phi * nx as f64) as usize;
            for (i, ui) in u.iter_mut().enumerate() {
                let r = i + 1;
                *ui = if r <= c {
                    u0
                } else if r >= nx + 1 - c {
                    -u0
                } else {
                    0.0
                };
            }
        }
        InitialKind::TaylorGreen | InitialKind::GaussianDipole { .. } => {
            need(2)?;
            let (nx, ny) = (geom.sizes()[0] as f64, geom.sizes()[1] as f64);
            for site in 0..n {
                let c = geom.coords(site);
                let rx = -PI + 2.0 * PI * (c[0] + 1) as f64 / nx;
                let ry = -PI + 2.0 * PI * (c[1] + 1) as f64 / ny;
                let (vx, vy) = match kind {
                    InitialKind::TaylorGreen => (rx.sin() * ry.cos(), -rx.cos() * ry.sin()),
                    InitialKind::GaussianDipole { s, sigma } => dipole_velocity(rx, ry, s, sigma),
                    _ => unreachable!(),
                };
                u[site * 2] = u0 * vx;
                u[site * 2 + 1] = u0 * vy;
            }
        }
    }
    equilibrium(&vec![0.0; n], &u, &model)
}

/// Velocity `(d psi/d r_y, -d psi/d r_x)` of the Gaussian vortex dipole.
pub fn dipole_velocity(rx: f64, ry: f64, s: f64, sigma: f64) -> (f64, f64) {
    let s2 = 2.0 * sigma * sigma;
    let gp = (-((rx - s).powi(2) + ry * ry) / s2).exp();
    let gm = (-((rx + s).powi(2) + ry * ry) / s2).exp();
    let inv = 1.0 / (sigma * sigma);
    let dpsi_dx = -(rx - s) * inv * gp + (rx + s) * inv * gm;
    let dpsi_dy = -ry * inv * gp + ry * inv * gm;
    (dpsi_dy, -dpsi_dx)
}

/// States `g(0..=T*)` of a direct LBE run with per-step norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub q: usize,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// First step at which `||g|| > 1`, if any.
    pub norm_exceeded_at: Option<usize>,
}

impl Trajectory {
    pub fn t_star(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_star", "site", "m", "g"])?;
        for (t, g) in self.states.iter().enumerate() {
            for (i, v) in g.iter().enumerate() {
                out.write_record([
                    t.to_string(),
                    (i / self.q).to_string(),
                    (i % self.q).to_string(),
                    format!("{v:e}"),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Little-endian dump: u64 header `D, N_1..N_D, Q, T*` then f64 data.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec![self.dim as u64];
        header.extend(self.sizes.iter().map(|&n| n as u64));
        header.push(self.q as u64);
        header.push(self.t_star() as u64);
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for g in &self.states {
            for v in g {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let dim = next(&mut r)? as usize;
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let sizes: Vec<usize> = (0..dim).map(|_| next(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let q = next(&mut r)? as usize;
        let t_star = next(&mut r)? as usize;
        let len = sizes.iter().product::<usize>() * q;
        let mut states = Vec::with_capacity(t_star + 1);
        for _ in 0..=t_star {
            let g = (0..len).map(|_| next(&mut r).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
            states.push(g);
        }
        let norms: Vec<f64> = states.iter().map(|g| norm2(g)).collect();
        let norm_exceeded_at = norms.iter().position(|&x| x > 1.0);
        Ok(Self { dim, sizes, q, states, norms, norm_exceeded_at })
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }
}

/// One step `g -> S C g` of the shifted LBE.
pub fn lbe_step(g: &[f64], model: &VelocityModel, stream: &StreamingMap, tau: f64) -> Vec<f64> {
    stream.apply(&collide_unchecked(g, model, tau))
}

/// Runs `T*` steps of collision followed by streaming.
pub fn run_lbe(g0: &[f64], sim: &SimParams, geom: &LatticeGeometry) -> Result<Trajectory> {
    run_lbe_steps(g0, sim.tau_bar_star, sim.t_star, geom)
}

pub fn run_lbe_steps(g0: &[f64], tau: f64, steps: usize, geom: &LatticeGeometry) -> Result<Trajectory> {
    check_tau(tau)?;
    let model = VelocityModel::new(geom.dim())?;
    check_len("initial state", geom.num_sites() * model.q(), g0.len())?;
    let stream = StreamingMap::new(&model, geom)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(g0.to_vec());
    for t in 1..=steps {
        let g = lbe_step(&states[t - 1], &model, &stream, tau);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        states.push(g);
    }
    let norms: Vec<f64> = states.iter().map(|g| norm2(g)).collect();
    let norm_exceeded_at = norms.iter().position(|&x| x > 1.0);
    Ok(Trajectory {
        dim: geom.dim(),
        sizes: geom.sizes().to_vec(),
        q: model.q(),
        states,
        norms,
        norm_exceeded_at,
    })
}
