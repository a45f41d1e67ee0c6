//! Block lower-bidiagonal time-stepping systems built from the Carleman step
//! `S C`, their solves, condition-number estimation and the eigenstates used
//! in the lower bound.

use std::f64::consts::PI;

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::carleman::{CarlemanOperator, CarlemanVector, CollisionMatrices};
use crate::error::{check_len, Error, Result};
use crate::lanczos::{lanczos_largest, LanczosOptions, LanczosResult};
use crate::lattice::{norm2, LatticeGeometry, VelocityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    /// Rows `t = 0..=T*` only.
    History,
    /// History rows followed by `(2^W - 1)(T* + 1)` idle rows.
    Final { w: u32 },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::History => "history",
            SystemKind::Final { .. } => "final",
        }
    }

    pub fn waiting_qubits(&self) -> Option<u32> {
        match self {
            SystemKind::History => None,
            SystemKind::Final { w } => Some(*w),
        }
    }
}

/// `A x` with identity diagonal blocks and `-S C` (evolution rows) or `-I`
/// (idle rows) on the block subdiagonal.
#[derive(Debug, Clone, Copy)]
pub struct TimeBlockSystem<'a> {
    op: &'a CarlemanOperator,
    kind: SystemKind,
    t_star: usize,
}

impl<'a> TimeBlockSystem<'a> {
    pub fn new(op: &'a CarlemanOperator, kind: SystemKind, t_star: usize) -> Self {
        Self { op, kind, t_star }
    }

    pub fn operator(&self) -> &CarlemanOperator {
        self.op
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn t_star(&self) -> usize {
        self.t_star
    }

    pub fn num_blocks(&self) -> usize {
        match self.kind {
            SystemKind::History => self.t_star + 1,
            SystemKind::Final { w } => (1usize << w) * (self.t_star + 1),
        }
    }

    pub fn block_dim(&self) -> usize {
        self.op.dim()
    }

    pub fn dim(&self) -> usize {
        self.num_blocks() * self.block_dim()
    }

    fn evolves_into(&self, t: usize) -> bool {
        t <= self.t_star
    }

    fn blocks<'b>(&self, x: &'b [f64]) -> std::slice::ChunksExact<'b, f64> {
        x.chunks_exact(self.block_dim())
    }

    /// `b = (y_ini, 0, ..., 0)`.
    pub fn initial_rhs(&self, y_ini: &CarlemanVector) -> Result<Vec<f64>> {
        check_len("initial Carleman vector", self.block_dim(), y_ini.len())?;
        let mut b = vec![0.0; self.dim()];
        b[..self.block_dim()].copy_from_slice(y_ini.as_slice());
        Ok(b)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("A x", self.dim(), x.len())?;
        let bd = self.block_dim();
        let mut out = x.to_vec();
        for (t, prev) in self.blocks(x).enumerate().take(self.num_blocks() - 1) {
            let row = t + 1;
            let coupling = if self.evolves_into(row) { self.op.apply_step(prev)? } else { prev.to_vec() };
            for (o, c) in out[row * bd..(row + 1) * bd].iter_mut().zip(coupling) {
                *o -= c;
            }
        }
        Ok(out)
    }

    pub fn apply_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("A^T z", self.dim(), z.len())?;
        let bd = self.block_dim();
        let mut out = z.to_vec();
        for (row, next) in self.blocks(z).enumerate().skip(1) {
            let coupling = if self.evolves_into(row) { self.op.apply_step_adjoint(next)? } else { next.to_vec() };
            for (o, c) in out[(row - 1) * bd..row * bd].iter_mut().zip(coupling) {
                *o -= c;
            }
        }
        Ok(out)
    }

    /// Forward block substitution for `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("A^-1 b", self.dim(), b.len())?;
        let bd = self.block_dim();
        let mut x = vec![0.0; self.dim()];
        x[..bd].copy_from_slice(&b[..bd]);
        for row in 1..self.num_blocks() {
            let prev = &x[(row - 1) * bd..row * bd];
            let next = if self.evolves_into(row) { self.op.apply_step(prev)? } else { prev.to_vec() };
            for (i, v) in next.into_iter().enumerate() {
                x[row * bd + i] = v + b[row * bd + i];
            }
        }
        Ok(x)
    }

    /// Backward block substitution for `A^T x = b`.
    pub fn solve_adjoint(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("A^-T b", self.dim(), b.len())?;
        let bd = self.block_dim();
        let nb = self.num_blocks();
        let mut x = vec![0.0; self.dim()];
        x[(nb - 1) * bd..].copy_from_slice(&b[(nb - 1) * bd..]);
        for row in (1..nb).rev() {
            let next = &x[row * bd..(row + 1) * bd];
            let prev = if self.evolves_into(row) { self.op.apply_step_adjoint(next)? } else { next.to_vec() };
            for (i, v) in prev.into_iter().enumerate() {
                x[(row - 1) * bd + i] = v + b[(row - 1) * bd + i];
            }
        }
        Ok(x)
    }

    /// Largest singular value of `A^{-1}` via Lanczos on `A^{-T} A^{-1}`.
    pub fn inverse_norm(&self, opts: &LanczosOptions) -> Result<LanczosResult> {
        let mut r = lanczos_largest(self.dim(), |v| self.solve_adjoint(&self.solve(v)?), None, opts)?;
        r.value = r.value.max(0.0).sqrt();
        Ok(r)
    }

    /// Dense row-major copy of `A`, for small oracle checks.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = self.apply(&e)?;
            e[c] = 0.0;
            for (r, v) in col.into_iter().enumerate() {
                a[r * n + c] = v;
            }
        }
        Ok(a)
    }
}

/// Condition-number estimate of a time-block system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    #[serde(rename = "Re")]
    pub re: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N_C")]
    pub nc: usize,
    #[serde(rename = "W")]
    pub w: Option<u32>,
    pub kind: String,
    #[serde(rename = "norm_C")]
    pub norm_c: f64,
    pub norm_a_lower: f64,
    pub norm_a_upper: f64,
    pub norm_ainv: f64,
    pub kappa: f64,
    pub kappa_lower: f64,
    pub kappa_upper: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

/// `kappa ~ (1 + ||C||) ||A^{-1}||`, with `||A^{-1}||` from Lanczos.
///
/// `power_norms[t] = ||(S C)^t||` for `t = 0..=T*` enables the block upper bound.
pub fn condition_number(
    system: &TimeBlockSystem,
    norm_c: f64,
    power_norms: Option<&[f64]>,
    opts: &LanczosOptions,
) -> Result<ConditionEstimate> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("Lanczos tolerance must be positive".into()));
    }
    let inv = system.inverse_norm(opts)?;
    let t = system.t_star();
    let kappa_upper = match power_norms {
        Some(p) => Some(kappa_upper_bound(norm_c, p, t, system.kind())?),
        None => None,
    };
    let op = system.operator();
    Ok(ConditionEstimate {
        re: f64::NAN,
        beta: f64::NAN,
        dim: op.model().dim(),
        nc: op.nc(),
        w: system.kind().waiting_qubits(),
        kind: system.kind().name().to_string(),
        norm_c,
        norm_a_lower: (1.0 + norm_c * norm_c).sqrt(),
        norm_a_upper: 1.0 + norm_c,
        norm_ainv: inv.value,
        kappa: (1.0 + norm_c) * inv.value,
        kappa_lower: kappa_lower_bound(norm_c, t),
        kappa_upper,
        iterations: inv.iterations,
        converged: inv.converged,
        residual: inv.residual,
    })
}

/// `||C|| T* / sqrt(3)`.
pub fn kappa_lower_bound(norm_c: f64, t_star: usize) -> f64 {
    norm_c * t_star as f64 / 3f64.sqrt()
}

/// Block-norm upper bound on the condition number.
pub fn kappa_upper_bound(norm_c: f64, power_norms: &[f64], t_star: usize, kind: SystemKind) -> Result<f64> {
    check_len("power norms", t_star + 1, power_norms.len())?;
    let tt = t_star as f64;
    let sum = match kind {
        SystemKind::History => power_norms
            .iter()
            .enumerate()
            .map(|(t, p)| (tt - t as f64 + 1.0) * p * p)
            .sum::<f64>(),
        SystemKind::Final { w } => {
            let pw = 2f64.powi(w as i32);
            power_norms
                .iter()
                .enumerate()
                .map(|(t, p)| (pw * (tt + 1.0) - t as f64) * p * p)
                .sum::<f64>()
                + 2f64.powi(2 * w as i32 - 1) * (tt + 1.0).powi(2)
        }
    };
    Ok((1.0 + norm_c) * sum.sqrt())
}

/// `||(S C)^t||` for `t = 0..=t_max` by Lanczos on `((S C)^t)^T (S C)^t`.
pub fn power_norms(op: &CarlemanOperator, t_max: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    let mut out = vec![1.0];
    for t in 1..=t_max {
        let apply = |v: &[f64]| {
            let mut x = v.to_vec();
            for _ in 0..t {
                x = op.apply_step(&x)?;
            }
            for _ in 0..t {
                x = op.apply_step_adjoint(&x)?;
            }
            Ok(x)
        };
        let r = lanczos_largest(op.dim(), apply, None, opts)?;
        out.push(r.value.max(0.0).sqrt());
    }
    Ok(out)
}

fn single_site_operator(model: &VelocityModel, tau: f64, nc: usize) -> Result<CarlemanOperator> {
    let geom = LatticeGeometry::periodic(&vec![1; model.dim()])?;
    let cm = CollisionMatrices::new_inclusive(model, tau)?;
    CarlemanOperator::with_matrices(&geom, cm, nc)
}

/// Reduced dimension `Q (Q^N_C - 1)/(Q - 1)` of the single-site collision matrix.
pub fn single_site_dim(q: usize, nc: usize) -> u128 {
    crate::simulation::carleman_dim(q, nc as u32)
}

/// `||C||` from the single-site Carleman collision matrix, matrix-free.
///
/// Locality makes this equal to `||C||` on any lattice. Accepts `tau = 1/2`.
pub fn norm_c(model: &VelocityModel, tau: f64, nc: usize, opts: &LanczosOptions) -> Result<LanczosResult> {
    let op = single_site_operator(model, tau, nc)?;
    let mut r = lanczos_largest(
        op.dim(),
        |v| op.apply_collision_adjoint(&op.apply_collision(v)?),
        None,
        opts,
    )?;
    r.value = r.value.max(0.0).sqrt();
    Ok(r)
}

/// `||C||` by dense SVD of the assembled single-site matrix.
pub fn norm_c_dense(model: &VelocityModel, tau: f64, nc: usize, max_dim: usize) -> Result<f64> {
    let op = single_site_operator(model, tau, nc)?;
    let n = op.dim();
    if n > max_dim {
        return Err(Error::Capacity {
            what: format!("dense single-site collision matrix of order {n}"),
            needed: (n as u128).pow(2) * 8,
            cap: (max_dim as u128).pow(2) * 8,
        });
    }
    let c = op.assemble_sparse(u128::MAX)?.collision;
    let m = nalgebra::DMatrix::from_row_slice(n, n, &c.to_dense());
    let svd = SVD::new(m, false, false);
    Ok(svd.singular_values.max())
}

/// Phase of the eigenvalue `e^{i theta}` of `S C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theta {
    Zero,
    Pi,
}

/// Unit vectors spanning `ker F1` (numerical rank tolerance `1e-10`).
pub fn f1_kernel(cm: &CollisionMatrices) -> Result<Vec<Vec<f64>>> {
    let q = cm.q();
    let svd = SVD::new(cm.f1_matrix(), false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let smax = svd.singular_values.max();
    let kernel: Vec<Vec<f64>> = (0..q)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax.max(1.0))
        .map(|i| vt.row(i).iter().copied().collect())
        .collect();
    if kernel.is_empty() {
        Err(Error::Numerical("F1 has no kernel".into()))
    } else {
        Ok(kernel)
    }
}

/// Linear-equilibrium velocity profile `18 w_m (e_m . u)`.
fn velocity_profile(model: &VelocityModel, u: &[f64]) -> Vec<f64> {
    (0..model.q())
        .map(|m| {
            let eu: f64 = model.velocity(m).iter().zip(u).map(|(&e, &x)| e as f64 * x).sum();
            18.0 * model.weights()[m] * eu
        })
        .collect()
}

/// Normalised eigenvector of `S C` with eigenvalue `e^{i theta}`, supported
/// on the first Carleman block.
///
/// `Zero` needs a wall-free lattice and uses a uniform kernel vector of
/// `F1`. `Pi` alternates a zero-density velocity profile over a 2-site (D=1)
/// or 2x2 (D=2) tiling, is zero on wall nodes, and needs even sizes.
pub fn eigenstate_xi(theta: Theta, op: &CarlemanOperator) -> Result<CarlemanVector> {
    let model = op.model();
    let geom = op.geometry();
    let q = model.q();
    let n = geom.num_sites();
    let mut first = vec![0.0; n * q];
    match theta {
        Theta::Zero => {
            if geom.has_walls() {
                return Err(Error::InvalidParameter("the +1 eigenstate needs a lattice without walls".into()));
            }
            let kernel = f1_kernel(op.matrices())?;
            let w = model.weights();
            let mut psi = vec![0.0; q];
            for k in &kernel {
                let c: f64 = k.iter().zip(w).map(|(a, b)| a * b).sum();
                for (p, v) in psi.iter_mut().zip(k) {
                    *p += c * v;
                }
            }
            if norm2(&psi) < 1e-12 {
                psi = kernel[0].clone();
            }
            for s in 0..n {
                first[s * q..(s + 1) * q].copy_from_slice(&psi);
            }
        }
        Theta::Pi => {
            let dim = model.dim();
            if dim == 3 {
                return Err(Error::UnsupportedDimension(3));
            }
            if geom.sizes().iter().any(|&s| s % 2 != 0) {
                return Err(Error::InvalidParameter(format!(
                    "the -1 eigenstate needs even lattice sizes, got {:?}",
                    geom.sizes()
                )));
            }
            let (psi1, psi2) = if dim == 1 {
                (velocity_profile(model, &[1.0]), vec![0.0; q])
            } else {
                (velocity_profile(model, &[-1.0, -1.0]), velocity_profile(model, &[-1.0, 1.0]))
            };
            for s in 0..n {
                if geom.is_wall(s) {
                    continue;
                }
                let c = geom.coords(s);
                let (psi, sign) = if dim == 1 {
                    (&psi1, if c[0].is_multiple_of(2) { 1.0 } else { -1.0 })
                } else {
                    match (c[0] % 2, c[1] % 2) {
                        (0, 0) => (&psi1, -1.0),
                        (1, 0) => (&psi2, 1.0),
                        (0, _) => (&psi2, -1.0),
                        _ => (&psi1, 1.0),
                    }
                };
                for m in 0..q {
                    first[s * q + m] = sign * psi[m];
                }
            }
        }
    }
    let norm = norm2(&first);
    if norm == 0.0 {
        return Err(Error::Numerical("eigenstate has empty support".into()));
    }
    first.iter_mut().for_each(|x| *x /= norm);
    let mut xi = CarlemanVector::zeros(op.d(), op.nc());
    xi.block_mut(1).copy_from_slice(&first);
    Ok(xi)
}

/// The history-system test vector `x_theta = (T*+1)^{-1/2} sum_t e^{i theta t} |t> xi`.
pub fn test_vector(system: &TimeBlockSystem, xi: &CarlemanVector, theta: Theta) -> Result<Vec<f64>> {
    check_len("eigenstate", system.block_dim(), xi.len())?;
    let t1 = system.t_star() + 1;
    let scale = 1.0 / (t1 as f64).sqrt();
    let mut x = vec![0.0; system.dim()];
    for t in 0..t1 {
        let phase = match theta {
            Theta::Zero => 1.0,
            Theta::Pi => (PI * t as f64).cos().round(),
        };
        let bd = system.block_dim();
        for (o, v) in x[t * bd..(t + 1) * bd].iter_mut().zip(xi.as_slice()) {
            *o = scale * phase * v;
        }
    }
    Ok(x)
}

/// `sqrt((T*+2)(2T*+3)/6)`, the exact value of `||A_H^{-1} x_theta||`.
pub fn test_vector_gain(t_star: usize) -> f64 {
    let t = t_star as f64;
    ((t + 2.0) * (2.0 * t + 3.0) / 6.0).sqrt()
}
