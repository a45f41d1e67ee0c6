//! Collision matrices, Carleman vectors and the truncated Carleman
//! collision/streaming operators.
//!
//! Block `k` of a Carleman vector is a `k`-fold tensor over the state index
//! (`d = N Q`) stored row-major. Collision block `C^k_l` is a sum over
//! placements of `l - k` quadratic factors among the `k` output slots; each
//! placement is applied as a sequence of mode products, one output slot at a
//! time, so no `d^k x d^l` matrix is ever formed.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::lattice::{check_tau, norm2, LatticeGeometry, StreamingMap, VelocityModel};
use crate::simulation::carleman_dim;
use crate::sparse::CsrMatrix;

/// Default memory cap for dense Carleman storage: 8 GiB.
pub const DEFAULT_MEMORY_CAP: u128 = 8 << 30;

/// Dense per-site collision matrices `F1` (Q x Q) and `F2` (Q x Q^2).
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionMatrices {
    q: usize,
    tau_bar_star: f64,
    f1: Vec<f64>,
    f2: Vec<f64>,
    a1: Vec<f64>,
}

impl CollisionMatrices {
    pub fn new(model: &VelocityModel, tau_bar_star: f64) -> Result<Self> {
        check_tau(tau_bar_star)?;
        Ok(Self::build(model, tau_bar_star))
    }

    /// Like [`CollisionMatrices::new`] but also accepts the stability
    /// boundary `tau = 1/2`, where prefactor bounds are attained.
    pub fn new_inclusive(model: &VelocityModel, tau_bar_star: f64) -> Result<Self> {
        if tau_bar_star >= 0.5 && tau_bar_star.is_finite() {
            Ok(Self::build(model, tau_bar_star))
        } else {
            Err(Error::UnstableRelaxation(tau_bar_star))
        }
    }

    fn build(model: &VelocityModel, tau: f64) -> Self {
        let q = model.q();
        let w = model.weights();
        let mut f1 = vec![0.0; q * q];
        let mut f2 = vec![0.0; q * q * q];
        for m in 0..q {
            for m1 in 0..q {
                let delta = if m == m1 { 1.0 } else { 0.0 };
                f1[m * q + m1] = (w[m] + 3.0 * w[m] * model.gram(m, m1) as f64 - delta) / tau;
                for m2 in 0..q {
                    let e1 = model.gram(m, m1) as f64;
                    let e2 = model.gram(m, m2) as f64;
                    let e12 = model.gram(m1, m2) as f64;
                    f2[m * q * q + m1 * q + m2] = w[m] / tau * (4.5 * e1 * e2 - 1.5 * e12);
                }
            }
        }
        let mut a1 = f1.clone();
        for m in 0..q {
            a1[m * q + m] += 1.0;
        }
        Self { q, tau_bar_star: tau, f1, f2, a1 }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn tau_bar_star(&self) -> f64 {
        self.tau_bar_star
    }

    /// Row-major `F1`.
    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    /// Row-major `F2`, column index `m1 * Q + m2`.
    pub fn f2(&self) -> &[f64] {
        &self.f2
    }

    /// Row-major `I + F1`.
    pub fn identity_plus_f1(&self) -> &[f64] {
        &self.a1
    }

    pub fn f1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q, &self.f1)
    }

    pub fn identity_plus_f1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q, &self.a1)
    }

    pub fn f2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q * self.q, &self.f2)
    }

    /// Sitewise `(I + F1) g + F2 (g (x) g)`.
    pub fn collide_quadratic(&self, g: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; g.len()];
        for (gs, os) in g.chunks_exact(q).zip(out.chunks_exact_mut(q)) {
            for m in 0..q {
                let mut acc = 0.0;
                for m1 in 0..q {
                    acc += self.a1[m * q + m1] * gs[m1];
                    let row = &self.f2[m * q * q + m1 * q..m * q * q + (m1 + 1) * q];
                    acc += gs[m1] * row.iter().zip(gs).map(|(f, x)| f * x).sum::<f64>();
                }
                os[m] = acc;
            }
        }
        out
    }
}

/// Truncated Carleman vector `(y_1, ..., y_{N_C})` stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanVector {
    d: usize,
    nc: usize,
    data: Vec<f64>,
}

fn block_offsets(d: usize, nc: usize) -> Vec<usize> {
    let mut off = vec![0];
    for k in 1..=nc {
        off.push(off[k - 1] + d.pow(k as u32));
    }
    off
}

/// Checks that `count` f64 values fit under `cap` bytes.
pub fn check_capacity(what: &str, count: u128, cap: u128) -> Result<()> {
    let needed = count.saturating_mul(8);
    if needed > cap {
        Err(Error::Capacity { what: what.to_string(), needed, cap })
    } else {
        Ok(())
    }
}

impl CarlemanVector {
    pub fn zeros(d: usize, nc: usize) -> Self {
        let len = carleman_dim(d, nc as u32) as usize;
        Self { d, nc, data: vec![0.0; len] }
    }

    pub fn from_flat(d: usize, nc: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Carleman vector", carleman_dim(d, nc as u32) as usize, data.len())?;
        Ok(Self { d, nc, data })
    }

    /// `y_k = g0^{(x) k}` for `k = 1..=N_C`.
    pub fn from_state(g0: &[f64], nc: usize, cap_bytes: u128) -> Result<Self> {
        if nc == 0 {
            return Err(Error::InvalidParameter("truncation order must be at least 1".into()));
        }
        let d = g0.len();
        check_capacity("Carleman vector", carleman_dim(d, nc as u32), cap_bytes)?;
        let mut data = Vec::with_capacity(carleman_dim(d, nc as u32) as usize);
        data.extend_from_slice(g0);
        let mut prev = 0;
        for _ in 2..=nc {
            let start = data.len();
            for i in prev..start {
                let a = data[i];
                for &b in g0 {
                    data.push(a * b);
                }
            }
            prev = start;
        }
        Ok(Self { d, nc, data })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    fn range(&self, k: usize) -> std::ops::Range<usize> {
        assert!((1..=self.nc).contains(&k), "block {k} outside 1..={}", self.nc);
        let start: usize = (1..k).map(|j| self.d.pow(j as u32)).sum();
        start..start + self.d.pow(k as u32)
    }

    /// Block `y_k`, 1-based.
    pub fn block(&self, k: usize) -> &[f64] {
        &self.data[self.range(k)]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.range(k);
        &mut self.data[r]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn block_norms(&self) -> Vec<f64> {
        (1..=self.nc).map(|k| norm2(self.block(k))).collect()
    }
}

/// All ways of choosing which of `k` output slots carry a quadratic factor,
/// with `p` such slots. `true` marks a quadratic slot.
pub fn placements(k: usize, p: usize) -> Vec<Vec<bool>> {
    fn rec(pos: usize, k: usize, left: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if pos == k {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if k - pos > left {
            cur.push(false);
            rec(pos + 1, k, left, cur, out);
            cur.pop();
        }
        if left > 0 {
            cur.push(true);
            rec(pos + 1, k, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if p <= k {
        rec(0, k, p, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Matrix-free Carleman collision and streaming operators on a lattice.
#[derive(Debug, Clone)]
pub struct CarlemanOperator {
    model: VelocityModel,
    geom: LatticeGeometry,
    cm: CollisionMatrices,
    stream: StreamingMap,
    nc: usize,
    d: usize,
    offsets: Vec<usize>,
    placements: Vec<Vec<Vec<Vec<bool>>>>,
    factors: Factors,
}

/// `I + F1 = alpha I + U1 V1^T` and `F2 = U2 V2^T`, truncated at numerical
/// rank. The BGK matrices have rank `D + 1` and at most `1 + D(D+1)/2`
/// beyond the identity part, so mode products cost `O(rank)` per entry.
#[derive(Debug, Clone)]
struct Factors {
    alpha: f64,
    r1: usize,
    u1: Vec<f64>,
    v1: Vec<f64>,
    r2: usize,
    u2: Vec<f64>,
    v2: Vec<f64>,
}

/// `m = U V^T` with `U` scaled by the singular values; both returned row-major.
fn low_rank(m: DMatrix<f64>) -> (usize, Vec<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("left vectors"), svd.v_t.expect("right vectors"));
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-13 * top).collect();
    let r = keep.len();
    let mut uf = vec![0.0; rows * r];
    let mut vf = vec![0.0; cols * r];
    for (k, &i) in keep.iter().enumerate() {
        for a in 0..rows {
            uf[a * r + k] = u[(a, i)] * svd.singular_values[i];
        }
        for b in 0..cols {
            vf[b * r + k] = vt[(i, b)];
        }
    }
    (r, uf, vf)
}

impl Factors {
    fn new(cm: &CollisionMatrices) -> Self {
        let q = cm.q();
        let alpha = 1.0 - 1.0 / cm.tau_bar_star();
        let shifted = cm.identity_plus_f1_matrix() - DMatrix::<f64>::identity(q, q) * alpha;
        let (r1, u1, v1) = low_rank(shifted);
        let (r2, u2, v2) = low_rank(cm.f2_matrix());
        Self { alpha, r1, u1, v1, r2, u2, v2 }
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Linear,
    LinearT,
    Quadratic,
    QuadraticT,
}

/// Column block length for the rank-space accumulators.
const JB: usize = 256;
/// Below this inner stride, entries are handled one column at a time.
const SMALL_INNER: usize = 64;
/// Largest velocity set, bounding every factor rank.
const MAX_Q: usize = 27;

/// One column of a factored mode product: `t = V^T x[ins]`, then
/// `out[outs] (+)= U t`, plus `alpha x[outs]` for the linear factor.
#[inline]
#[allow(clippy::too_many_arguments)]
fn low_rank_column(
    x: &[f64],
    ins: impl Iterator<Item = usize>,
    v: &[f64],
    out: &mut [f64],
    outs: impl Iterator<Item = usize>,
    u: &[f64],
    r: usize,
    alpha: Option<f64>,
    overwrite: bool,
) {
    let mut t = [0.0; MAX_Q];
    for (m1, off) in ins.enumerate() {
        let xv = x[off];
        if xv != 0.0 {
            for (tk, vk) in t[..r].iter_mut().zip(&v[m1 * r..(m1 + 1) * r]) {
                *tk += vk * xv;
            }
        }
    }
    for (m, off) in outs.enumerate() {
        let mut acc: f64 = u[m * r..(m + 1) * r].iter().zip(&t[..r]).map(|(a, b)| a * b).sum();
        if let Some(a) = alpha {
            acc += a * x[off];
        }
        out[off] = if overwrite { acc } else { out[off] + acc };
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

impl CarlemanOperator {
    pub fn new(geom: &LatticeGeometry, tau_bar_star: f64, nc: usize) -> Result<Self> {
        let model = VelocityModel::new(geom.dim())?;
        let cm = CollisionMatrices::new(&model, tau_bar_star)?;
        Self::with_matrices(geom, cm, nc)
    }

    /// Builds from prepared collision matrices (which may sit at `tau = 1/2`).
    pub fn with_matrices(geom: &LatticeGeometry, cm: CollisionMatrices, nc: usize) -> Result<Self> {
        if nc == 0 {
            return Err(Error::InvalidParameter("truncation order must be at least 1".into()));
        }
        let model = VelocityModel::new(geom.dim())?;
        check_len("collision matrix size", model.q(), cm.q())?;
        let stream = StreamingMap::new(&model, geom)?;
        let d = geom.num_sites() * model.q();
        let offsets = block_offsets(d, nc);
        let mut table = vec![Vec::new(); nc + 1];
        for k in 1..=nc {
            table[k] = vec![Vec::new(); nc + 1];
            for l in k..=(2 * k).min(nc) {
                table[k][l] = placements(k, l - k);
            }
        }
        let factors = Factors::new(&cm);
        Ok(Self { model, geom: geom.clone(), cm, stream, nc, d, offsets, placements: table, factors })
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geom
    }

    pub fn matrices(&self) -> &CollisionMatrices {
        &self.cm
    }

    pub fn streaming(&self) -> &StreamingMap {
        &self.stream
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    /// Single-time state dimension `d = N Q`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Carleman dimension `d_C`.
    pub fn dim(&self) -> usize {
        self.offsets[self.nc]
    }

    fn block<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        &x[self.offsets[k - 1]..self.offsets[k]]
    }

    /// `out (+)= F x` for one factor `F` acting on the axis (or site-diagonal
    /// axis pair) of `x` that sits between `outer` and `inner` strides. With
    /// `overwrite`, every entry `F` reaches is assigned instead of added to.
    fn mode_product(&self, mode: Mode, x: &[f64], out: &mut [f64], outer: usize, inner: usize, overwrite: bool) {
        let (q, d) = (self.model.q(), self.d);
        let f = &self.factors;
        let (v, u, r, wide_in, wide_out) = match mode {
            Mode::Linear => (&f.v1, &f.u1, f.r1, false, false),
            Mode::LinearT => (&f.u1, &f.v1, f.r1, false, false),
            Mode::Quadratic => (&f.v2, &f.u2, f.r2, true, false),
            Mode::QuadraticT => (&f.u2, &f.v2, f.r2, false, true),
        };
        let alpha = matches!(mode, Mode::Linear | Mode::LinearT).then_some(f.alpha);
        let rows = |wide: bool| if wide { q * q } else { q };
        let (n_in, n_out) = (rows(wide_in), rows(wide_out));
        let offset = |wide: bool, p: usize, s: usize, c: usize| {
            if wide { ((p * d + s * q + c / q) * d + s * q + c % q) * inner } else { (p * d + s * q + c) * inner }
        };
        let mut t = vec![0.0; r * JB];
        for p in 0..outer {
            for s in 0..self.geom.num_sites() {
                if inner < SMALL_INNER {
                    for j in 0..inner {
                        let ins = (0..n_in).map(|c| offset(wide_in, p, s, c) + j);
                        let outs = (0..n_out).map(|c| offset(wide_out, p, s, c) + j);
                        low_rank_column(x, ins, v, out, outs, u, r, alpha, overwrite);
                    }
                    continue;
                }
                for j0 in (0..inner).step_by(JB) {
                    let len = JB.min(inner - j0);
                    t.fill(0.0);
                    for c in 0..n_in {
                        let xr = &x[offset(wide_in, p, s, c) + j0..][..len];
                        for k in 0..r {
                            axpy(&mut t[k * JB..k * JB + len], v[c * r + k], xr);
                        }
                    }
                    for c in 0..n_out {
                        let o = offset(wide_out, p, s, c) + j0;
                        let orow = &mut out[o..o + len];
                        match (alpha, overwrite) {
                            (Some(a), true) => orow.iter_mut().zip(&x[o..o + len]).for_each(|(y, xv)| *y = a * xv),
                            (Some(a), false) => axpy(orow, a, &x[o..o + len]),
                            (None, true) => orow.fill(0.0),
                            (None, false) => {}
                        }
                        for k in 0..r {
                            axpy(orow, u[c * r + k], &t[k * JB..k * JB + len]);
                        }
                    }
                }
            }
        }
    }

    /// Adds one placement of `C^k_l` applied to `x` into `out`, or with
    /// `transpose` its transpose mapping order `k` to order `l`.
    ///
    /// Factors act on disjoint axes and commute, so contractions run first
    /// and expansions last to keep intermediates small.
    fn add_placement(&self, x: &[f64], slots: &[bool], transpose: bool, out: &mut [f64], scratch: &mut [Vec<f64>; 2]) {
        let n = slots.len();
        let mut width: Vec<u32> = slots.iter().map(|&quad| if quad && !transpose { 2 } else { 1 }).collect();
        let quads = (0..n).filter(|&s| slots[s]);
        let lins = (0..n).filter(|&s| !slots[s]);
        let order: Vec<usize> = if transpose { lins.chain(quads).collect() } else { quads.chain(lins).collect() };
        let [a, b] = scratch;
        let mut from_x = true;
        for (i, &s) in order.iter().enumerate() {
            let outer = self.d.pow(width[..s].iter().sum());
            let inner = self.d.pow(width[s + 1..].iter().sum());
            let mode = match (slots[s], transpose) {
                (false, false) => Mode::Linear,
                (false, true) => Mode::LinearT,
                (true, false) => Mode::Quadratic,
                (true, true) => Mode::QuadraticT,
            };
            if slots[s] {
                width[s] = if transpose { 2 } else { 1 };
            }
            let src: &[f64] = if from_x { x } else { a };
            if i + 1 == order.len() {
                self.mode_product(mode, src, out, outer, inner, false);
            } else {
                // Only a multi-site expansion leaves entries untouched.
                let sparse_out = matches!(mode, Mode::QuadraticT) && self.geom.num_sites() > 1;
                if sparse_out {
                    b.clear();
                }
                b.resize(self.d.pow(width.iter().sum()), 0.0);
                self.mode_product(mode, src, b, outer, inner, !sparse_out);
                std::mem::swap(a, b);
                from_x = false;
            }
        }
    }

    /// Collision block `C^k_l` applied to a tensor of order `l`.
    pub fn apply_block(&self, k: usize, l: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d.pow(k as u32)];
        let mut scratch = Default::default();
        for slots in &self.placements[k][l] {
            self.add_placement(x, slots, false, &mut out, &mut scratch);
        }
        out
    }

    /// Carleman collision `C y`.
    pub fn apply_collision(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("Carleman collision", self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = Default::default();
        for k in 1..=self.nc {
            let (lo, hi) = (self.offsets[k - 1], self.offsets[k]);
            for l in k..=(2 * k).min(self.nc) {
                let yl = self.block(x, l);
                if yl.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for slots in &self.placements[k][l] {
                    self.add_placement(yl, slots, false, &mut out[lo..hi], &mut scratch);
                }
            }
        }
        Ok(out)
    }

    /// Transposed Carleman collision `C^T z`, assembled block-column-wise.
    pub fn apply_collision_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("Carleman collision adjoint", self.dim(), z.len())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = Default::default();
        for k in 1..=self.nc {
            let zk = self.block(z, k);
            if zk.iter().all(|&v| v == 0.0) {
                continue;
            }
            for l in k..=(2 * k).min(self.nc) {
                let (lo, hi) = (self.offsets[l - 1], self.offsets[l]);
                for slots in &self.placements[k][l] {
                    self.add_placement(zk, slots, true, &mut out[lo..hi], &mut scratch);
                }
            }
        }
        Ok(out)
    }

    fn permute_axes(&self, x: &mut [f64], order: usize, table: &[usize]) {
        let d = self.d;
        let mut tmp = vec![0.0; x.len()];
        for axis in 0..order {
            let outer = d.pow(axis as u32);
            let inner = d.pow((order - axis - 1) as u32);
            for p in 0..outer {
                for (a, &b) in table.iter().enumerate() {
                    let src = (p * d + a) * inner;
                    let dst = (p * d + b) * inner;
                    tmp[dst..dst + inner].copy_from_slice(&x[src..src + inner]);
                }
            }
            x.copy_from_slice(&tmp);
        }
    }

    /// Streaming `S^{(x) k}` on every block, in place.
    pub fn apply_streaming_in_place(&self, x: &mut [f64]) {
        for k in 1..=self.nc {
            let (lo, hi) = (self.offsets[k - 1], self.offsets[k]);
            self.permute_axes(&mut x[lo..hi], k, self.stream.dest());
        }
    }

    /// Inverse (= transposed) streaming, in place.
    pub fn apply_streaming_adjoint_in_place(&self, x: &mut [f64]) {
        for k in 1..=self.nc {
            let (lo, hi) = (self.offsets[k - 1], self.offsets[k]);
            self.permute_axes(&mut x[lo..hi], k, self.stream.src());
        }
    }

    /// One Carleman step `S C x`.
    pub fn apply_step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.apply_collision(x)?;
        self.apply_streaming_in_place(&mut y);
        Ok(y)
    }

    /// Transposed step `C^T S^T z`.
    pub fn apply_step_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("Carleman step adjoint", self.dim(), z.len())?;
        let mut s = z.to_vec();
        self.apply_streaming_adjoint_in_place(&mut s);
        self.apply_collision_adjoint(&s)
    }

    pub fn step(&self, y: &CarlemanVector) -> Result<CarlemanVector> {
        check_len("Carleman state dimension", self.d, y.d())?;
        check_len("Carleman truncation", self.nc, y.nc())?;
        CarlemanVector::from_flat(self.d, self.nc, self.apply_step(y.as_slice())?)
    }

    /// Explicit sparse `C`, `S` and `S C`. Fails if `d_C` entries exceed `cap_bytes`.
    pub fn assemble_sparse(&self, cap_bytes: u128) -> Result<AssembledCarleman> {
        check_capacity("assembled Carleman operator", self.dim() as u128, cap_bytes)?;
        let d = self.d;
        let q = self.model.q();
        let n = self.geom.num_sites();
        let a1 = CsrMatrix::identity(n).kron(&CsrMatrix::from_dense(q, q, self.cm.identity_plus_f1()));
        let mut t2 = Vec::new();
        for r in 0..n {
            for m in 0..q {
                for m1 in 0..q {
                    for m2 in 0..q {
                        let c = self.cm.f2()[m * q * q + m1 * q + m2];
                        if c != 0.0 {
                            t2.push((r * q + m, (r * q + m1) * d + r * q + m2, c));
                        }
                    }
                }
            }
        }
        let f2 = CsrMatrix::from_triplets(d, d * d, t2);
        let s1 = CsrMatrix::from_triplets(
            d,
            d,
            self.stream.dest().iter().enumerate().map(|(i, &j)| (j, i, 1.0)).collect(),
        );
        let mut c_trips = Vec::new();
        let mut s_trips = Vec::new();
        let mut s_pow = s1.clone();
        for k in 1..=self.nc {
            if k > 1 {
                s_pow = s_pow.kron(&s1);
            }
            let ro = self.offsets[k - 1];
            s_trips.extend(s_pow.triplets().map(|(r, c, v)| (ro + r, ro + c, v)));
            for l in k..=(2 * k).min(self.nc) {
                let co = self.offsets[l - 1];
                for slots in &self.placements[k][l] {
                    let mut m = if slots[0] { f2.clone() } else { a1.clone() };
                    for &quad in &slots[1..] {
                        m = m.kron(if quad { &f2 } else { &a1 });
                    }
                    c_trips.extend(m.triplets().map(|(r, c, v)| (ro + r, co + c, v)));
                }
            }
        }
        let dim = self.dim();
        let collision = CsrMatrix::from_triplets(dim, dim, c_trips);
        let streaming = CsrMatrix::from_triplets(dim, dim, s_trips);
        let step = streaming.matmul(&collision)?;
        Ok(AssembledCarleman { collision, streaming, step })
    }
}

/// Explicit sparse forms of the Carleman operators.
#[derive(Debug, Clone)]
pub struct AssembledCarleman {
    pub collision: CsrMatrix,
    pub streaming: CsrMatrix,
    pub step: CsrMatrix,
}

/// Result of repeated Carleman steps.
#[derive(Debug, Clone)]
pub struct CarlemanEvolution {
    /// `y_1(t)` for `t = 0..=T*`.
    pub first_blocks: Vec<Vec<f64>>,
    /// Block norms `||y_k(t)||` for each `t`.
    pub block_norms: Vec<Vec<f64>>,
    /// Full vectors for each `t`, if requested.
    pub history: Option<Vec<CarlemanVector>>,
    pub last: CarlemanVector,
}

/// Applies `S C` `steps` times to `y0`.
pub fn evolve_carleman(
    y0: &CarlemanVector,
    steps: usize,
    op: &CarlemanOperator,
    keep_history: bool,
) -> Result<CarlemanEvolution> {
    let mut y = y0.clone();
    let mut first_blocks = vec![y.block(1).to_vec()];
    let mut block_norms = vec![y.block_norms()];
    let mut history = keep_history.then(|| vec![y.clone()]);
    for t in 1..=steps {
        y = op.step(&y)?;
        let norms = y.block_norms();
        if norms.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: t });
        }
        first_blocks.push(y.block(1).to_vec());
        block_norms.push(norms);
        if let Some(h) = history.as_mut() {
            h.push(y.clone());
        }
    }
    Ok(CarlemanEvolution { first_blocks, block_norms, history, last: y })
}
