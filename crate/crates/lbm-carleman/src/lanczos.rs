//! Lanczos iteration for the largest eigenvalue of a symmetric positive
//! semidefinite operator given only through matrix-vector products.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Relative change of the Ritz value over `window` iterations.
    pub tol: f64,
    pub window: usize,
    pub max_iter: usize,
    /// Memory allowed for the Krylov basis; the iteration restarts from the
    /// current Ritz vector when the next basis vector would not fit.
    pub max_basis_bytes: u128,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-8, window: 5, max_iter: 400, max_basis_bytes: 2 << 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanczosResult {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Estimated residual `||A x - theta x||` of the Ritz pair.
    pub residual: f64,
    pub restarts: usize,
    /// Ritz value after every iteration.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn largest_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// Largest eigenvalue of the symmetric operator `apply` on `R^n`.
///
/// Uses full reorthogonalisation. Starts from `start` or a fixed irregular
/// positive vector, so that symmetric operators are not trapped in an
/// invariant subspace of the all-ones direction.
pub fn lanczos_largest<F>(n: usize, mut apply: F, start: Option<&[f64]>, opts: &LanczosOptions) -> Result<LanczosResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let mut v: Vec<f64> = match start {
        Some(s) => {
            check_len("Lanczos start vector", n, s.len())?;
            s.to_vec()
        }
        None => (0..n).map(|i| 1.0 + 0.5 * (i as f64 * 0.618_033_988_7 + 0.3).sin()).collect(),
    };
    let nv = norm2(&v);
    if nv == 0.0 {
        return Err(Error::InvalidParameter("zero start vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let cap_vectors = ((opts.max_basis_bytes / (8 * n as u128)) as usize).max(2);
    let mut history = Vec::new();
    let mut restarts = 0;
    let mut iterations = 0;
    let mut residual;
    let mut theta;

    loop {
        let mut basis: Vec<Vec<f64>> = vec![v.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut ritz_coeffs = vec![1.0];
        loop {
            let j = basis.len() - 1;
            let mut w = apply(&basis[j])?;
            check_len("Lanczos operator output", n, w.len())?;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    axpy(&mut w, -c, b);
                }
            }
            let b = norm2(&w);
            iterations += 1;
            let (val, coeffs) = largest_ritz(&alpha, &beta);
            theta = val;
            ritz_coeffs = coeffs;
            residual = b * ritz_coeffs.last().unwrap().abs();
            history.push(theta);
            if !theta.is_finite() {
                return Err(Error::Numerical("Lanczos produced a non-finite Ritz value".into()));
            }

            let h = history.len();
            let converged_window = h > opts.window
                && (history[h - 1] - history[h - 1 - opts.window]).abs() <= opts.tol * history[h - 1].abs();
            let invariant = b <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE);
            if converged_window || invariant {
                return Ok(LanczosResult { value: theta, iterations, converged: true, residual, restarts, history });
            }
            if iterations >= opts.max_iter {
                return Ok(LanczosResult { value: theta, iterations, converged: false, residual, restarts, history });
            }
            if basis.len() >= cap_vectors {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
        let mut x = vec![0.0; n];
        for (c, b) in ritz_coeffs.iter().zip(&basis) {
            axpy(&mut x, *c, b);
        }
        let nx = norm2(&x);
        x.iter_mut().for_each(|e| *e /= nx);
        v = x;
        restarts += 1;
    }
}
