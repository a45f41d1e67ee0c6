//! Quantum resource model: block-encoding prefactors, qubit counts, query
//! bounds, success probabilities, T-gate ledger and classical comparison.
//!
//! All logarithms in gate and register formulas are base 2.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::carleman::CollisionMatrices;
use crate::error::{Error, Result};
use crate::error_analysis::{fit_error_model, FitResult};
use crate::lanczos::LanczosOptions;
use crate::lattice::VelocityModel;
use crate::linear_system::norm_c;
use crate::simulation::select_params;

fn check_tau_inclusive(tau: f64) -> Result<()> {
    if tau >= 0.5 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::UnstableRelaxation(tau))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) { Ok(()) } else { Err(Error::UnsupportedDimension(dim)) }
}

/// Largest singular value of `I + F1`, closed form.
///
/// Defined on `tau >= 1/2`; the endpoint gives the supremum of the prefactor.
pub fn alpha_if1(tau: f64, dim: usize) -> Result<f64> {
    check_tau_inclusive(tau)?;
    check_dim(dim)?;
    let d = dim as i32;
    let tt = tau * tau - tau;
    let inner = 9f64.powi(d) + 4.0 * 6f64.powi(d) * tt;
    let outer = 3f64.powi(d) + 2f64.powi(d + 1) * tt + inner.sqrt();
    Ok(outer.sqrt() / (2f64.powi(d + 1).sqrt() * tau))
}

/// `(2 / (3 tau)) (3/sqrt 2)^D sqrt(D + 2)`, the block-encoding prefactor of `F2bar`.
pub fn alpha_f2bar(tau: f64, dim: usize) -> Result<f64> {
    check_tau_inclusive(tau)?;
    check_dim(dim)?;
    Ok(2.0 / (3.0 * tau) * (3.0 / SQRT_2).powi(dim as i32) * (dim as f64 + 2.0).sqrt())
}

/// `n choose k` as a float; exact for the small arguments used here.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sum_l C(N-l, l) a1^{N-2l} a2^l`.
pub fn alpha_c(a1: f64, a2: f64, nc: usize) -> f64 {
    (0..=nc / 2)
        .map(|l| binomial((nc - l) as u64, l as u64) * a1.powi((nc - 2 * l) as i32) * a2.powi(l as i32))
        .sum()
}

fn ceil_log2(x: f64) -> u32 {
    if x <= 1.0 { 0 } else { x.log2().ceil() as u32 }
}

/// Ancilla count `N+1 + ceil log(floor(N/2)+1) + max_l [ceil log C(N-l,l) + l(4D-1)]`.
pub fn n_ancilla(nc: usize, dim: usize) -> u32 {
    let base = nc as u32 + 1 + ceil_log2((nc / 2 + 1) as f64);
    let extra = (0..=nc / 2)
        .map(|l| ceil_log2(binomial((nc - l) as u64, l as u64)) + l as u32 * (4 * dim as u32 - 1))
        .max()
        .unwrap_or(0);
    base + extra
}

/// Data-register qubit count under both rounding readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataQubits {
    /// `beta [D (N + 1/2) + 1] log Re + 2 D N + log N + W` before rounding.
    pub raw: f64,
    /// `ceil(raw)`.
    pub ceiled: u64,
    /// Every register rounded up separately:
    /// `N D (ceil log N_x + 2) + ceil log T* + ceil log N + W`.
    pub per_register: u64,
}

pub fn n_data(re: f64, beta: f64, dim: usize, nc: usize, w: u32) -> Result<DataQubits> {
    check_dim(dim)?;
    if nc == 0 {
        return Err(Error::InvalidParameter("N_C must be at least 1".into()));
    }
    let (n, d) = (nc as f64, dim as f64);
    let raw = beta * (d * (n + 0.5) + 1.0) * re.log2() + 2.0 * d * n + n.log2() + w as f64;
    let sim = select_params(re, beta, dim)?;
    let per_register = (nc * dim) as u64 * (ceil_log2(sim.n_x as f64) as u64 + 2)
        + ceil_log2(sim.t_star as f64) as u64
        + ceil_log2(n) as u64
        + w as u64;
    Ok(DataQubits { raw, ceiled: (raw - 1e-9).ceil() as u64, per_register })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefactorSet {
    pub tau_bar_star: f64,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N_C")]
    pub nc: usize,
    pub alpha_if1: f64,
    pub alpha_f2bar: f64,
    pub alpha_c: f64,
    pub alpha_a: f64,
    pub n_a: u32,
}

pub fn prefactors(tau: f64, dim: usize, nc: usize) -> Result<PrefactorSet> {
    let a1 = alpha_if1(tau, dim)?;
    let a2 = alpha_f2bar(tau, dim)?;
    let ac = alpha_c(a1, a2, nc);
    Ok(PrefactorSet {
        tau_bar_star: tau,
        dim,
        nc,
        alpha_if1: a1,
        alpha_f2bar: a2,
        alpha_c: ac,
        alpha_a: ac + 1.0,
        n_a: n_ancilla(nc, dim),
    })
}

/// `(1 + alpha_C) / sqrt(1 + ||C||^2)`.
pub fn be_ratio_bound(alpha_c: f64, norm_c: f64) -> f64 {
    (1.0 + alpha_c) / (1.0 + norm_c * norm_c).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeRatioPoint {
    #[serde(rename = "N_C")]
    pub nc: usize,
    #[serde(rename = "norm_C")]
    pub norm_c: f64,
    pub alpha_c: f64,
    pub be_ratio: f64,
    pub lanczos_iterations: usize,
    pub converged: bool,
}

/// Bound `(1 + alpha_C)/sqrt(1 + ||C||^2)` at one truncation order.
pub fn be_ratio_point(dim: usize, tau: f64, nc: usize, opts: &LanczosOptions) -> Result<BeRatioPoint> {
    let model = VelocityModel::new(dim)?;
    let ac = alpha_c(alpha_if1(tau, dim)?, alpha_f2bar(tau, dim)?, nc);
    let r = norm_c(&model, tau, nc, opts)?;
    Ok(BeRatioPoint {
        nc,
        norm_c: r.value,
        alpha_c: ac,
        be_ratio: be_ratio_bound(ac, r.value),
        lanczos_iterations: r.iterations,
        converged: r.converged,
    })
}

/// Log-linear fit `BE = b exp(a N_C)` (slope `a`, prefactor `b`).
pub fn be_ratio_fit(points: &[BeRatioPoint]) -> Result<FitResult> {
    fit_error_model(&points.iter().map(|p| (p.nc as f64, p.be_ratio)).collect::<Vec<_>>())
}

pub fn be_ratio_sweep(dim: usize, tau: f64, ncs: &[usize], opts: &LanczosOptions) -> Result<(Vec<BeRatioPoint>, FitResult)> {
    let points = ncs.iter().map(|&nc| be_ratio_point(dim, tau, nc, opts)).collect::<Result<Vec<_>>>()?;
    let fit = be_ratio_fit(&points)?;
    Ok((points, fit))
}

/// The simplified bound `b exp(a N_C)` with `a = 1/4`.
pub fn be_ratio_simplified(nc: usize, b: f64) -> f64 {
    b * (nc as f64 / 4.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryBounds {
    pub rigorous: f64,
    pub simplified: f64,
}

/// Solver query bounds for condition number `kappa` and solver error `eps_q`.
pub fn query_bounds(kappa: f64, alpha_a: f64, norm_a: f64, eps_q: f64) -> Result<QueryBounds> {
    if !(1e-10..1.0).contains(&eps_q) {
        return Err(Error::InvalidParameter(format!("solver error {eps_q} outside [1e-10, 1)")));
    }
    if !(kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!("condition number {kappa} below 1")));
    }
    let scale = alpha_a / norm_a;
    let rigorous = scale
        * (56.0 * kappa + 1.05 * kappa * ((1.0 - eps_q * eps_q).sqrt() / eps_q).ln() + 2.78 * kappa.ln().powi(3) + 3.17);
    Ok(QueryBounds { rigorous, simplified: 85.0 * scale * kappa })
}

/// `Re^{beta (D/2 + 1)}`, the time-step count lower proxy.
pub fn query_lower_proxy(re: f64, beta: f64, dim: usize) -> f64 {
    re.powf(beta * (dim as f64 / 2.0 + 1.0))
}

/// `85 c e^{N_C/4} Re^chi` from a fitted condition-number power law.
pub fn query_upper_re(re: f64, nc: usize, c: f64, chi: f64) -> f64 {
    85.0 * c * (nc as f64 / 4.0).exp() * re.powf(chi)
}

/// Amplitude-estimation overhead `Re^{beta/2}`.
pub fn measurement_overhead(re: f64, beta: f64) -> f64 {
    re.powf(beta / 2.0)
}

/// Probability of landing in the idle rows, `1 / (1 + N_H / ((2^W - 1) N_F))`.
pub fn p_final(norm_h: f64, norm_f: f64, w: u32) -> f64 {
    let idle = (2f64.powi(w as i32) - 1.0) * norm_f;
    if idle == 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + norm_h / idle)
}

/// Probability of the first Carleman block, `(1 - |g|^2) / (1 - |g|^{2N})`.
pub fn p_first_block(g_norm: f64, nc: usize) -> f64 {
    let x = g_norm * g_norm;
    if (1.0 - x).abs() < 1e-12 {
        return 1.0 / nc as f64;
    }
    (1.0 - x) / (1.0 - x.powi(nc as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalComparison {
    pub q_c: f64,
    pub q_c_exponent: f64,
    pub lambda: f64,
    pub lambda_with_measurement: f64,
    /// `N Q 64` classical bits.
    pub classical_bits: f64,
}

pub fn classical_comparison(re: f64, beta: f64, dim: usize, chi: f64) -> Result<ClassicalComparison> {
    check_dim(dim)?;
    let exponent = beta * (dim as f64 + 1.0);
    let lambda = exponent - chi;
    let sim = select_params(re, beta, dim)?;
    Ok(ClassicalComparison {
        q_c: re.powf(exponent),
        q_c_exponent: exponent,
        lambda,
        lambda_with_measurement: lambda - beta / 2.0,
        classical_bits: sim.num_sites() as f64 * sim.q() as f64 * 64.0,
    })
}

/// Published power-law fits `kappa = c Re^chi` at `beta = 3/4`, as `(c, chi)`.
pub fn reference_power_law(dim: usize, nc: usize) -> Option<(f64, f64)> {
    match (dim, nc) {
        (1, 1) => Some((1.635, 1.167)),
        (1, 2) => Some((0.905, 1.691)),
        (1, 3) => Some((0.459, 2.283)),
        (1, 4) => Some((0.486, 2.792)),
        (2, 1) => Some((2.254, 1.588)),
        (2, 2) => Some((5.460, 1.936)),
        _ => None,
    }
}

/// End-to-end resource estimate for one `(Re, N_C)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(rename = "Re")]
    pub re: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N_C")]
    pub nc: usize,
    #[serde(rename = "W")]
    pub w: u32,
    pub prefactors: PrefactorSet,
    pub data_qubits: DataQubits,
    #[serde(rename = "norm_C")]
    pub norm_c: f64,
    /// `1 + ||C||`, the upper bound used for `||A||`.
    pub norm_a: f64,
    pub kappa: f64,
    pub power_law: (f64, f64),
    pub epsilon_q: f64,
    pub query: QueryBounds,
    pub query_lower_proxy: f64,
    pub query_upper_re: f64,
    pub measurement_overhead: f64,
    pub classical: ClassicalComparison,
    /// T gates per query at gate error `epsilon_gate`, for `D <= 2`.
    pub t_per_query: Option<f64>,
    pub t_total: Option<f64>,
    pub epsilon_gate: f64,
}

/// Resource estimate with `kappa = c Re^chi` from `power_law = (c, chi)`.
#[allow(clippy::too_many_arguments)]
pub fn cost_report(
    re: f64,
    beta: f64,
    dim: usize,
    nc: usize,
    w: u32,
    norm_c: f64,
    power_law: (f64, f64),
    eps_q: f64,
    eps_gate: f64,
) -> Result<CostReport> {
    let sim = select_params(re, beta, dim)?;
    let pre = prefactors(sim.tau_bar_star, dim, nc)?;
    let (c, chi) = power_law;
    let kappa = (c * re.powf(chi)).max(1.0);
    let norm_a = 1.0 + norm_c;
    let query = query_bounds(kappa, pre.alpha_a, norm_a, eps_q)?;
    let t_per_query = match dim {
        1 | 2 => Some(gate_budget(dim, nc, eps_gate, w, re, beta)?.full),
        _ => None,
    };
    Ok(CostReport {
        re,
        beta,
        dim,
        nc,
        w,
        data_qubits: n_data(re, beta, dim, nc, w)?,
        norm_c,
        norm_a,
        kappa,
        power_law,
        epsilon_q: eps_q,
        query_lower_proxy: query_lower_proxy(re, beta, dim),
        query_upper_re: query_upper_re(re, nc, c, chi),
        measurement_overhead: measurement_overhead(re, beta),
        classical: classical_comparison(re, beta, dim, chi)?,
        t_total: t_per_query.map(|t| t * query.simplified),
        t_per_query,
        epsilon_gate: eps_gate,
        query,
        prefactors: pre,
    })
}

/// Collision-circuit T-costs `G = g0 + g1 log(1/eps)` and their error factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionGateCosts {
    pub g_if1: (f64, f64),
    pub g_f2: (f64, f64),
    /// `eps_F1 / eps`.
    pub eps_f1: f64,
    /// `eps_F2 / eps`.
    pub eps_f2: f64,
}

pub fn collision_gate_costs(dim: usize) -> Result<CollisionGateCosts> {
    match dim {
        1 => Ok(CollisionGateCosts {
            g_if1: (280.0, 480.0),
            g_f2: (154.0, 240.0),
            eps_f1: 4.0 * SQRT_2 + 2.0,
            eps_f2: 1.0 + 2.0 * SQRT_2,
        }),
        2 => Ok(CollisionGateCosts {
            g_if1: (6412.0, 60291.0),
            g_f2: (4500.0, 5280.0),
            eps_f1: 28.0 * SQRT_2 + 5.0,
            eps_f2: 59.0 * SQRT_2,
        }),
        3 => Err(Error::InvalidParameter("collision factorization out of scope for D = 3".into())),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateBreakdown {
    /// Shift, streaming and rotation gates outside the collision circuit.
    pub linear_system: f64,
    pub rotations: f64,
    pub block_selection: f64,
    pub block_rotations: f64,
    pub permutations: f64,
    pub collision_controls: f64,
    /// `2N(N+2)/3 [(2N+5) G1 + (N+1) G2]`.
    pub collision_circuits: f64,
}

impl GateBreakdown {
    pub fn total(&self) -> f64 {
        self.linear_system
            + self.rotations
            + self.block_selection
            + self.block_rotations
            + self.permutations
            + self.collision_controls
            + self.collision_circuits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateBudget {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N_C")]
    pub nc: usize,
    pub epsilon: f64,
    #[serde(rename = "W")]
    pub w: u32,
    #[serde(rename = "Re")]
    pub re: f64,
    pub beta: f64,
    /// Closed-form ledger total.
    pub full: f64,
    /// Same ledger with every sum evaluated term by term.
    pub full_explicit_sums: f64,
    /// Cubic closed form evaluated at `epsilon_total`.
    pub simplified: f64,
    pub epsilon_total: f64,
    pub breakdown: GateBreakdown,
}

/// `sum_l sum_{k=max(l,1)}^{N-l}` index pairs.
fn lk_pairs(nc: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=nc / 2).flat_map(move |l| (l.max(1)..=nc - l).map(move |k| (l, k)))
}

/// `eps_total / eps` for gate error `eps`.
pub fn epsilon_total_factor(dim: usize, nc: usize) -> Result<f64> {
    let c = collision_gate_costs(dim)?;
    let n = nc as f64;
    Ok(4.0 + n * (6.0 * (12.0 + n) + (n + 2.0) * ((2.0 * n + 5.0) * c.eps_f1 + (n + 1.0) * c.eps_f2)) / 24.0)
}

/// Closed-form cubic T-count evaluated at total error `eps_total`.
pub fn gate_simplified(dim: usize, nc: usize, eps_total: f64) -> Result<f64> {
    let n = nc as f64;
    let (k, lead, slope_a, slope_b, off_a, off_b) = match dim {
        1 => (
            (96.0 + (94.0 + 44.0 * SQRT_2) * n + (27.0 + 42.0 * SQRT_2) * n * n + (5.0 + 10.0 * SQRT_2) * n.powi(3)) / 24.0,
            1.0,
            800.0,
            1760.0,
            476.0,
            1036.0,
        ),
        2 => (
            (96.0 + (122.0 + 398.0 * SQRT_2) * n + (51.0 + 429.0 * SQRT_2) * n * n + (10.0 + 115.0 * SQRT_2) * n.powi(3))
                / 24.0,
            8.0 / 3.0,
            83908.0,
            204490.0,
            4331.0,
            9140.0,
        ),
        3 => return Err(Error::InvalidParameter("collision factorization out of scope for D = 3".into())),
        d => return Err(Error::UnsupportedDimension(d)),
    };
    Ok(n * (n + 2.0) * ((slope_a * n + slope_b) * (k / eps_total).log2() + lead * (off_a * n + off_b)))
}

/// Full T-gate ledger for the final-state linear-system circuit.
pub fn gate_budget(dim: usize, nc: usize, eps: f64, w: u32, re: f64, beta: f64) -> Result<GateBudget> {
    let costs = collision_gate_costs(dim)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("gate error {eps} outside (0, 1)")));
    }
    if nc == 0 || re < 1.0 {
        return Err(Error::InvalidParameter("gate budget needs N_C >= 1 and Re >= 1".into()));
    }
    let lg = (1.0 / eps).log2();
    let n = nc as f64;
    let d = dim as f64;
    let g1 = costs.g_if1.0 + costs.g_if1.1 * lg;
    let g2 = costs.g_f2.0 + costs.g_f2.1 * lg;
    let n_b = ceil_log2((nc / 2) as f64) as f64;
    let n_c = ceil_log2(n) as f64;

    let log_nx = beta * re.log2();
    let log_t = beta * (d / 2.0 + 1.0) * re.log2();
    let linear_system = 78.0 * w as f64 + 64.0 + 102.0 * lg + 64.0 * log_t + 2.0 * d * n * (14.0 + 64.0 * log_nx);

    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let h: f64 = lk_pairs(nc)
        .map(|(l, k)| {
            let c = binomial(k as u64, l as u64);
            c * c.log2()
        })
        .sum();
    let rotations = 6.0 * n * (n_b + 1.0 + lg);
    let block_selection = (n + 2.0) / 2.0 * (14.0 + 14.0 * n_b + 64.0 * n_c);
    let block_rotations = (n * n + 4.0 * n) / 4.0 * (28.0 + 28.0 * (n_b + n_c) + 48.0 * lg);
    let permutations = ((2.0 + 4.0 / 5f64.sqrt()) * phi.powi(nc as i32) - 4.0) * (14.0 + 14.0 * (n_b + n_c)) + 2.0 * h;
    let collision_circuits = 2.0 * n * (n + 2.0) / 3.0 * ((2.0 * n + 5.0) * g1 + (n + 1.0) * g2);
    let breakdown = GateBreakdown {
        linear_system,
        rotations,
        block_selection,
        block_rotations,
        permutations,
        collision_controls: 0.0,
        collision_circuits,
    };

    let mut explicit = linear_system + 6.0 * n * lg;
    for l in 0..=nc / 2 {
        explicit += 14.0 + 14.0 * n_b + 64.0 * n_c;
        for k in l.max(1)..=nc - l {
            let c = binomial(k as u64, l as u64);
            let n_pi = ceil_log2(c) as f64;
            explicit += 14.0 + 14.0 * (n_b + n_c) + 48.0 * lg;
            explicit += 2.0 * c * (14.0 + 14.0 * (n_b + n_c + n_pi));
            explicit += 14.0 + 14.0 * (n_b + n_c) + 16.0 * (k - l) as f64 * g1 + 16.0 * l as f64 * g2;
        }
    }

    let epsilon_total = epsilon_total_factor(dim, nc)? * eps;
    Ok(GateBudget {
        dim,
        nc,
        epsilon: eps,
        w,
        re,
        beta,
        full: breakdown.total(),
        full_explicit_sums: explicit,
        simplified: gate_simplified(dim, nc, epsilon_total)?,
        epsilon_total,
        breakdown,
    })
}

/// Explicit HOSVD factors of `F2` at `tau = 1`, in the crate's velocity
/// order: `F2 = L diag-like(S) (R (x) R)^T` with `S` of shape `Q x Q^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hosvd {
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl Hosvd {
    /// Factors for relaxation time `tau`; only `S` scales, as `1/tau`.
    pub fn tabulated(dim: usize, tau: f64) -> Result<Self> {
        let (l, s, r) = match dim {
            1 => hosvd_d1(),
            2 => hosvd_d2(),
            3 => return Err(Error::InvalidParameter("no tabulated HOSVD for D = 3".into())),
            d => return Err(Error::UnsupportedDimension(d)),
        };
        Ok(Self { l, s: s / tau, r })
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * &self.s * self.r.kronecker(&self.r).transpose()
    }

    /// Largest entry of `|M^T M - I|` over `L` and `R`.
    pub fn unitarity_error(&self) -> f64 {
        let q = self.l.nrows();
        let id = DMatrix::<f64>::identity(q, q);
        let el = (self.l.transpose() * &self.l - &id).abs().max();
        let er = (self.r.transpose() * &self.r - &id).abs().max();
        el.max(er)
    }
}

fn permute_rows(m: DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)])
}

/// Tabulated order `(+1, 0, -1)` mapped to `(0, +1, -1)`.
fn hosvd_d1() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let s6 = 6f64.sqrt();
    let s3 = 3f64.sqrt();
    let l = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 / s6, 1.0 / SQRT_2, 1.0 / s3,
            -SQRT_2 / s3, 0.0, 1.0 / s3,
            1.0 / s6, -1.0 / SQRT_2, 1.0 / s3,
        ],
    );
    let r = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 / SQRT_2, 0.0, 1.0 / SQRT_2,
            0.0, 1.0, 0.0,
            -1.0 / SQRT_2, 0.0, 1.0 / SQRT_2,
        ],
    );
    let mut s = DMatrix::zeros(3, 9);
    s[(0, 0)] = s6;
    let order = [1, 0, 2];
    (permute_rows(l, &order), s, permute_rows(r, &order))
}

/// Tabulated in the crate's D2Q9 order. The right factor is stored so that
/// `F2 = L S (R (x) R)^T`; the tabulated matrix is the transpose of `R`.
fn hosvd_d2() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let s = f64::sqrt;
    let l = DMatrix::from_row_slice(
        9,
        9,
        &[
            -2.0 * SQRT_2 / 3.0, 0.0, 0.0, 0.0, 0.2, 2.0 * s(2.0 / 17.0) / 5.0, 4.0 / s(595.0), 4.0 / s(1855.0), 2.0 * s(2.0 / 53.0) / 3.0,
            1.0 / (6.0 * SQRT_2), -0.5, 0.0, 0.0, 0.0, 0.0, s(17.0 / 35.0), 17.0 / s(1855.0), -19.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, s(53.0 / 2.0) / 6.0,
            1.0 / (6.0 * SQRT_2), 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, s(35.0 / 53.0), 17.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), 0.5, 0.0, 0.0, 0.0, 0.0, s(17.0 / 35.0), -18.0 / s(1855.0), 17.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), 0.0, 0.5, -1.0 / SQRT_2, 0.4, 4.0 * s(2.0 / 17.0) / 5.0, -1.0 / (2.0 * s(595.0)), -1.0 / (2.0 * s(1855.0)), -1.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), 0.0, -0.5, 0.0, 0.0, 5.0 / s(34.0), -1.0 / (2.0 * s(595.0)), -1.0 / (2.0 * s(1855.0)), -1.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), 0.0, -0.5, 0.0, 0.8, -9.0 / (5.0 * s(34.0)), -1.0 / (2.0 * s(595.0)), -1.0 / (2.0 * s(1855.0)), -1.0 / (6.0 * s(106.0)),
            1.0 / (6.0 * SQRT_2), 0.0, 0.5, 1.0 / SQRT_2, 0.4, 4.0 * s(2.0 / 17.0) / 5.0, -1.0 / (2.0 * s(595.0)), -1.0 / (2.0 * s(1855.0)), -1.0 / (6.0 * s(106.0)),
        ],
    );
    let a = 1.0 / (2.0 * s(3.0));
    let b = 1.0 / s(3.0);
    let c = 1.0 / s(15.0);
    let d = 1.0 / s(30.0);
    let tab = DMatrix::from_row_slice(
        9,
        9,
        &[
            0.0, -a, a, -a, a, -b, 0.0, 0.0, b,
            0.0, -a, a, a, -a, 0.0, -b, b, 0.0,
            0.0, b, 0.0, b, 0.0, 0.0, 0.0, 0.0, b,
            0.0, b, 0.0, -b, 0.0, 0.0, 0.0, b, 0.0,
            0.0, -c, 0.0, c, 0.0, 0.0, s(0.6), 2.0 * c, 0.0,
            0.0, -c, 0.0, -c, 0.0, s(0.6), 0.0, 0.0, 2.0 * c,
            0.0, 0.0, 0.0, d, s(5.0 / 6.0), d, -d, d, -d,
            0.0, d, s(5.0 / 6.0), 0.0, 0.0, d, d, -d, -d,
            1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ],
    );
    let mut sig = DMatrix::zeros(9, 81);
    sig[(0, 0)] = 3.0 * SQRT_2;
    sig[(0, 10)] = 3.0 * SQRT_2;
    sig[(1, 1)] = -3.0;
    sig[(1, 9)] = -3.0;
    sig[(2, 0)] = 1.5;
    sig[(2, 10)] = -1.5;
    (l, sig, tab.transpose())
}

/// Reconstruction and unitarity errors of the tabulated factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HosvdCheck {
    pub reconstruction: f64,
    pub unitarity: f64,
    /// Largest singular value of `F2` against the tabulated top entry.
    pub sigma_max: f64,
}

pub fn verify_hosvd(dim: usize, tau: f64) -> Result<HosvdCheck> {
    let model = VelocityModel::new(dim)?;
    let f2 = CollisionMatrices::new_inclusive(&model, tau)?.f2_matrix();
    let h = Hosvd::tabulated(dim, tau)?;
    let reconstruction = (h.reconstruct() - &f2).abs().max();
    let sigma_max = SVD::new(f2, false, false).singular_values.max();
    Ok(HosvdCheck { reconstruction, unitarity: h.unitarity_error(), sigma_max })
}

/// Symmetry class of a singular vector of `I + F1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnPattern {
    /// Constant on each speed shell: `(a,a,b)` in D=1, `(a,a,a,a,b,b,b,b,c)` in D=2.
    ShellConstant,
    /// `v[-m] = v[m]` only: `(a,a,b,b,c,c,d,d,e)`.
    Even,
    /// `v[-m] = -v[m]`: `(a,-a,...,0)`.
    Odd,
}

/// Symmetry-adapted SVD of `I + F1` with every left and right singular
/// vector classified.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedSvd {
    pub singular_values: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub patterns: Vec<ColumnPattern>,
}

impl AdaptedSvd {
    pub fn reconstruction_error(&self, m: &DMatrix<f64>) -> f64 {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.singular_values.clone()));
        (&self.left * s * self.right.transpose() - m).abs().max()
    }

    pub fn count(&self, p: ColumnPattern) -> usize {
        self.patterns.iter().filter(|&&x| x == p).count()
    }
}

/// Orthonormal basis of the range of a symmetric projector.
fn range_basis(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(p.clone());
    let cols: Vec<_> = (0..p.nrows())
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (!cols.is_empty()).then(|| DMatrix::from_columns(&cols))
}

pub fn classify_column(v: &[f64], model: &VelocityModel, tol: f64) -> Option<ColumnPattern> {
    let q = model.q();
    let odd = (0..q).all(|m| (v[model.opposite(m)] + v[m]).abs() <= tol);
    if odd {
        return Some(ColumnPattern::Odd);
    }
    if !(0..q).all(|m| (v[model.opposite(m)] - v[m]).abs() <= tol) {
        return None;
    }
    let shell = |m: usize| model.gram(m, m);
    let shell_constant = (0..q).all(|a| (0..q).all(|b| shell(a) != shell(b) || (v[a] - v[b]).abs() <= tol));
    Some(if shell_constant { ColumnPattern::ShellConstant } else { ColumnPattern::Even })
}

/// SVD of `I + F1` computed separately on the odd, even-non-shell and
/// shell-constant subspaces, which the lattice symmetry leaves invariant.
pub fn adapted_svd_if1(dim: usize, tau: f64) -> Result<AdaptedSvd> {
    let model = VelocityModel::new(dim)?;
    let m = CollisionMatrices::new_inclusive(&model, tau)?.identity_plus_f1_matrix();
    let q = model.q();
    let mut parity = DMatrix::<f64>::zeros(q, q);
    let mut shell = DMatrix::<f64>::zeros(q, q);
    for a in 0..q {
        parity[(a, model.opposite(a))] = 1.0;
        let members: Vec<usize> = (0..q).filter(|&b| model.gram(b, b) == model.gram(a, a)).collect();
        for &b in &members {
            shell[(a, b)] = 1.0 / members.len() as f64;
        }
    }
    let id = DMatrix::<f64>::identity(q, q);
    let p_odd = (&id - &parity) * 0.5;
    let p_even = (&id + &parity) * 0.5;
    let p_rest = &p_even - &shell;
    let mut values = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for p in [&shell, &p_rest, &p_odd] {
        let Some(basis) = range_basis(p) else { continue };
        let block = basis.transpose() * &m * &basis;
        let svd = SVD::new(block, true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
        for i in 0..basis.ncols() {
            values.push(svd.singular_values[i]);
            left.push(&basis * u.column(i));
            right.push(&basis * vt.row(i).transpose());
        }
    }
    let left = DMatrix::from_columns(&left);
    let right = DMatrix::from_columns(&right);
    let mut patterns = Vec::with_capacity(q);
    for j in 0..q {
        let l: Vec<f64> = left.column(j).iter().copied().collect();
        let r: Vec<f64> = right.column(j).iter().copied().collect();
        let pl = classify_column(&l, &model, 1e-10);
        let pr = classify_column(&r, &model, 1e-10);
        match (pl, pr) {
            (Some(a), Some(b)) if a == b => patterns.push(a),
            _ => return Err(Error::Numerical(format!("singular pair {j} breaks the lattice symmetry"))),
        }
    }
    Ok(AdaptedSvd { singular_values: values, left, right, patterns })
}

/// Minimal unitary dilation `[[B, (I - B B^T)^{1/2}], [(I - B^T B)^{1/2}, -B^T]]`
/// of `B = A / alpha`; requires `||A|| <= alpha`.
pub fn unitary_dilation(a: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidParameter("dilation needs a square matrix".into()));
    }
    let n = a.nrows();
    let b = a / alpha;
    let norm = SVD::new(b.clone(), false, false).singular_values.max();
    if norm > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!("prefactor {alpha} below the spectral norm {}", norm * alpha)));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let sqrt_psd = |m: DMatrix<f64>| {
        let eig = SymmetricEigen::new(m);
        let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    };
    let top = sqrt_psd(&id - &b * b.transpose());
    let bottom = sqrt_psd(&id - b.transpose() * &b);
    let mut u = DMatrix::zeros(2 * n, 2 * n);
    u.view_mut((0, 0), (n, n)).copy_from(&b);
    u.view_mut((0, n), (n, n)).copy_from(&top);
    u.view_mut((n, 0), (n, n)).copy_from(&bottom);
    u.view_mut((n, n), (n, n)).copy_from(&(-b.transpose()));
    Ok(u)
}

/// Top-left `n x n` block.
pub fn top_left(u: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    u.view((0, 0), (n, n)).into_owned()
}

/// Block encoding of a product: with `U_i` acting on `(ancilla_i, data)`,
/// `(I_1 (x) U_2)` followed by `(U_1 (x) I_2)` on separate ancillas encodes
/// `A_1 A_2 / (alpha_1 alpha_2)`. Data is the fastest index.
pub fn product_encoding(u1: &DMatrix<f64>, u2: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let a1 = u1.nrows() / n;
    let a2 = u2.nrows() / n;
    let dim = a1 * a2 * n;
    // Layout (ancilla_1, ancilla_2, data).
    let lift1 = DMatrix::from_fn(dim, dim, |r, c| {
        let (r1, r2, rd) = (r / (a2 * n), (r / n) % a2, r % n);
        let (c1, c2, cd) = (c / (a2 * n), (c / n) % a2, c % n);
        if r2 == c2 { u1[(r1 * n + rd, c1 * n + cd)] } else { 0.0 }
    });
    let lift2 = DMatrix::from_fn(dim, dim, |r, c| {
        let (r1, r2, rd) = (r / (a2 * n), (r / n) % a2, r % n);
        let (c1, c2, cd) = (c / (a2 * n), (c / n) % a2, c % n);
        if r1 == c1 { u2[(r2 * n + rd, c2 * n + cd)] } else { 0.0 }
    });
    lift1 * lift2
}

/// Linear combination of block encodings: `sum_j alpha_j A_j` encoded with
/// prefactor `sum_j alpha_j` via PREP / SELECT / PREP^T.
pub fn lcu_encoding(parts: &[(DMatrix<f64>, f64)], n: usize) -> Result<(DMatrix<f64>, f64)> {
    let k = parts.len();
    if k == 0 {
        return Err(Error::InvalidParameter("empty linear combination".into()));
    }
    let anc = parts[0].0.nrows() / n;
    if parts.iter().any(|p| p.0.nrows() != anc * n || p.1 <= 0.0) {
        return Err(Error::InvalidParameter("LCU parts need equal sizes and positive weights".into()));
    }
    let total: f64 = parts.iter().map(|p| p.1).sum();
    let kp = k.next_power_of_two();
    // PREP on the selection register: first column is sqrt(alpha_j / total).
    let mut first = DMatrix::zeros(kp, 1);
    for (j, p) in parts.iter().enumerate() {
        first[(j, 0)] = (p.1 / total).sqrt();
    }
    let mut cols = vec![first.column(0).into_owned()];
    for i in 0..kp {
        let mut e = nalgebra::DVector::zeros(kp);
        e[i] = 1.0;
        cols.push(e);
    }
    let prep = DMatrix::from_columns(&cols).qr().q();
    let prep = prep.clone() * prep[(0, 0)].signum();
    let block = anc * n;
    let dim = kp * block;
    let mut select = DMatrix::<f64>::identity(dim, dim);
    for (j, p) in parts.iter().enumerate() {
        select.view_mut((j * block, j * block), (block, block)).copy_from(&p.0);
    }
    let lift = |m: &DMatrix<f64>| m.kronecker(&DMatrix::<f64>::identity(block, block));
    Ok((lift(&prep.transpose()) * select * lift(&prep), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefactor_endpoints() {
        assert!((alpha_if1(0.5, 1).unwrap() - (2.0 + 3f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((alpha_if1(0.5, 2).unwrap() - ((7.0 + 3.0 * 5f64.sqrt()) / 2.0).sqrt()).abs() < 1e-12);
        assert!((alpha_f2bar(1.0, 2).unwrap() - 6.0).abs() < 1e-12);
        assert!(alpha_if1(0.49, 1).is_err());
    }

    #[test]
    fn ancillas_single_block() {
        assert_eq!(n_ancilla(1, 1), 2);
    }

    #[test]
    fn fibonacci_sum_closed_form() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        for nc in 1..12 {
            let exact: f64 = lk_pairs(nc).map(|(l, k)| binomial(k as u64, l as u64)).sum();
            let closed = (1.0 + 2.0 / 5f64.sqrt()) * phi.powi(nc as i32) - 2.0;
            assert!((exact - closed).abs() < 1.0, "N_C={nc}: {exact} vs {closed}");
        }
    }
}
