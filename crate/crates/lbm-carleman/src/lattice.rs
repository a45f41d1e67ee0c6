//! Discrete velocity models, lattice geometry with bounce-back walls, the
//! shifted incompressible collision rule and streaming.
//!
//! Populations are stored site-major: entry `site * Q + m`. Sites are
//! row-major over `(x, y, z)` with `x` the slowest index, and lattice
//! coordinate `r*_i = 1..N_i` is stored at offset `r*_i - 1`.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A DdQq velocity set with weights and Gram matrix.
///
/// Ordering: rest velocity, then axis velocities `+x, -x, +y, -y, +z, -z`,
/// then the remaining velocities sorted lexicographically with the
/// component order `+1 < -1 < 0`. For D2Q9 this gives the diagonals
/// `(1,1), (1,-1), (-1,1), (-1,-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    dim: usize,
    velocities: Vec<[i32; 3]>,
    weights_exact: Vec<Rational64>,
    weights: Vec<f64>,
    gram: Vec<i32>,
    opposite: Vec<usize>,
}

impl VelocityModel {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut velocities = vec![[0i32; 3]];
        for axis in 0..dim {
            for sign in [1, -1] {
                let mut e = [0; 3];
                e[axis] = sign;
                velocities.push(e);
            }
        }
        let rank = |c: i32| match c {
            1 => 0,
            -1 => 1,
            _ => 2,
        };
        let mut diagonals = Vec::new();
        let q = 3usize.pow(dim as u32);
        for code in 0..q {
            let mut e = [0i32; 3];
            let mut c = code;
            for slot in e.iter_mut().take(dim) {
                *slot = (c % 3) as i32 - 1;
                c /= 3;
            }
            if e.iter().filter(|&&x| x != 0).count() >= 2 {
                diagonals.push(e);
            }
        }
        diagonals.sort_by_key(|e| (rank(e[0]), rank(e[1]), rank(e[2])));
        velocities.extend(diagonals);
        debug_assert_eq!(velocities.len(), q);

        let weights_exact: Vec<Rational64> = velocities
            .iter()
            .map(|e| {
                e[..dim].iter().fold(Rational64::from_integer(1), |acc, &c| {
                    acc * if c == 0 {
                        Rational64::new(2, 3)
                    } else {
                        Rational64::new(1, 6)
                    }
                })
            })
            .collect();
        let weights = weights_exact
            .iter()
            .map(|w| *w.numer() as f64 / *w.denom() as f64)
            .collect();
        let mut gram = vec![0; q * q];
        for a in 0..q {
            for b in 0..q {
                gram[a * q + b] = (0..3).map(|i| velocities[a][i] * velocities[b][i]).sum();
            }
        }
        let opposite = velocities
            .iter()
            .map(|e| {
                let neg = [-e[0], -e[1], -e[2]];
                velocities.iter().position(|v| *v == neg).expect("velocity set is symmetric")
            })
            .collect();
        Ok(Self { dim, velocities, weights_exact, weights, gram, opposite })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.velocities.len()
    }

    /// Velocity `e*_m` restricted to the model dimension.
    pub fn velocity(&self, m: usize) -> &[i32] {
        &self.velocities[m][..self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_exact(&self) -> &[Rational64] {
        &self.weights_exact
    }

    /// Gram entry `E_{m,m1} = e*_m . e*_{m1}`.
    pub fn gram(&self, m: usize, m1: usize) -> i32 {
        self.gram[m * self.q() + m1]
    }

    /// Index of the reversed velocity `-e*_m`.
    pub fn opposite(&self, m: usize) -> usize {
        self.opposite[m]
    }

    /// Equilibrium of one site, written into `out` (length Q).
    pub fn equilibrium_site(&self, delta_rho: f64, u: &[f64], out: &mut [f64]) {
        let uu: f64 = u.iter().map(|x| x * x).sum();
        for (m, o) in out.iter_mut().enumerate() {
            let eu: f64 = self.velocity(m).iter().zip(u).map(|(&e, &x)| e as f64 * x).sum();
            *o = self.weights[m] * (delta_rho + 3.0 * eu + 4.5 * eu * eu - 1.5 * uu);
        }
    }

    /// Density fluctuation and velocity of one site.
    pub fn moments_site(&self, g: &[f64]) -> (f64, [f64; 3]) {
        let mut rho = 0.0;
        let mut u = [0.0; 3];
        for (m, &gm) in g.iter().enumerate() {
            rho += gm;
            for (i, &e) in self.velocity(m).iter().enumerate() {
                u[i] += gm * e as f64;
            }
        }
        (rho, u)
    }
}

/// Periodic box with an optional set of wall nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    sizes: Vec<usize>,
    walls: Vec<bool>,
}

impl LatticeGeometry {
    /// Fully periodic lattice with no walls.
    pub fn periodic(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > 3 {
            return Err(Error::UnsupportedDimension(sizes.len()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("lattice sizes must be positive".into()));
        }
        let n = sizes.iter().product();
        Ok(Self { sizes: sizes.to_vec(), walls: vec![false; n] })
    }

    pub fn with_walls(sizes: &[usize], walls: Vec<bool>) -> Result<Self> {
        let mut geom = Self::periodic(sizes)?;
        check_len("wall indicator", geom.num_sites(), walls.len())?;
        geom.walls = walls;
        Ok(geom)
    }

    /// Marks every site whose coordinate along `axis` equals `index` (0-based) as a wall.
    pub fn add_wall_plane(&mut self, axis: usize, index: usize) {
        for site in 0..self.num_sites() {
            if self.coords(site)[axis] == index {
                self.walls[site] = true;
            }
        }
    }

    pub fn set_wall(&mut self, site: usize, wall: bool) {
        self.walls[site] = wall;
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_sites(&self) -> usize {
        self.walls.len()
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    pub fn is_wall(&self, site: usize) -> bool {
        self.walls[site]
    }

    pub fn has_walls(&self) -> bool {
        self.walls.iter().any(|&w| w)
    }

    /// 0-based coordinates of a site; unused axes are zero.
    pub fn coords(&self, site: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut rem = site;
        for axis in (0..self.dim()).rev() {
            c[axis] = rem % self.sizes[axis];
            rem /= self.sizes[axis];
        }
        c
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&c, &n)| acc * n + c % n)
    }

    /// Site reached from `site` by the lattice vector `e`, with periodic wrap.
    pub fn neighbor(&self, site: usize, e: &[i32]) -> usize {
        let c = self.coords(site);
        let mut idx = 0;
        for (axis, &n) in self.sizes.iter().enumerate() {
            let x = (c[axis] as i64 + e[axis] as i64).rem_euclid(n as i64) as usize;
            idx = idx * n + x;
        }
        idx
    }
}

/// Shifted population vector `g` with its time index.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub g: Vec<f64>,
    pub t_star: usize,
}

impl FluidState {
    pub fn new(g: Vec<f64>, model: &VelocityModel, geom: &LatticeGeometry) -> Result<Self> {
        check_len("fluid state", geom.num_sites() * model.q(), g.len())?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Self { g, t_star: 0 })
    }

    pub fn zeros(model: &VelocityModel, geom: &LatticeGeometry) -> Self {
        Self { g: vec![0.0; geom.num_sites() * model.q()], t_star: 0 }
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.g)
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sitewise equilibrium for density field `delta_rho` (length N) and
/// velocity field `u` (length N*D, site-major).
pub fn equilibrium(delta_rho: &[f64], u: &[f64], model: &VelocityModel) -> Result<Vec<f64>> {
    let n = delta_rho.len();
    let d = model.dim();
    check_len("velocity field", n * d, u.len())?;
    let q = model.q();
    let mut out = vec![0.0; n * q];
    for s in 0..n {
        model.equilibrium_site(delta_rho[s], &u[s * d..(s + 1) * d], &mut out[s * q..(s + 1) * q]);
    }
    Ok(out)
}

/// Density fluctuation (length N) and velocity (length N*D) fields of `g`.
pub fn moments(g: &[f64], model: &VelocityModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = model.q();
    let d = model.dim();
    if !g.len().is_multiple_of(q) {
        return Err(Error::ShapeMismatch { context: "moments", expected: q, got: g.len() % q });
    }
    let n = g.len() / q;
    let mut rho = vec![0.0; n];
    let mut u = vec![0.0; n * d];
    for s in 0..n {
        let (r, us) = model.moments_site(&g[s * q..(s + 1) * q]);
        rho[s] = r;
        u[s * d..(s + 1) * d].copy_from_slice(&us[..d]);
    }
    Ok((rho, u))
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.5 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::UnstableRelaxation(tau))
    }
}

/// BGK collision through the moments: `g - (g - g_eq(g)) / tau`.
pub fn collide(g: &[f64], model: &VelocityModel, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(collide_unchecked(g, model, tau))
}

pub(crate) fn collide_unchecked(g: &[f64], model: &VelocityModel, tau: f64) -> Vec<f64> {
    let q = model.q();
    let mut out = vec![0.0; g.len()];
    let mut eq = vec![0.0; q];
    for (gs, os) in g.chunks_exact(q).zip(out.chunks_exact_mut(q)) {
        let (rho, u) = model.moments_site(gs);
        model.equilibrium_site(rho, &u[..model.dim()], &mut eq);
        for m in 0..q {
            os[m] = gs[m] - (gs[m] - eq[m]) / tau;
        }
    }
    out
}

/// Streaming as a permutation of population entries.
///
/// A population of a fluid site moves along its velocity; if the
/// destination is a wall it stays put with its velocity reversed. Wall
/// nodes are left unchanged.
#[derive(Debug, Clone)]
pub struct StreamingMap {
    dest: Vec<usize>,
    src: Vec<usize>,
}

impl StreamingMap {
    pub fn new(model: &VelocityModel, geom: &LatticeGeometry) -> Result<Self> {
        if model.dim() != geom.dim() {
            return Err(Error::ShapeMismatch {
                context: "streaming dimension",
                expected: model.dim(),
                got: geom.dim(),
            });
        }
        let q = model.q();
        let len = geom.num_sites() * q;
        let mut dest = vec![0; len];
        for site in 0..geom.num_sites() {
            for m in 0..q {
                let i = site * q + m;
                dest[i] = if geom.is_wall(site) {
                    i
                } else {
                    let next = geom.neighbor(site, model.velocity(m));
                    if geom.is_wall(next) {
                        site * q + model.opposite(m)
                    } else {
                        next * q + m
                    }
                };
            }
        }
        let mut src = vec![usize::MAX; len];
        for (i, &j) in dest.iter().enumerate() {
            if src[j] != usize::MAX {
                return Err(Error::Numerical("streaming map is not a permutation".into()));
            }
            src[j] = i;
        }
        Ok(Self { dest, src })
    }

    pub fn len(&self) -> usize {
        self.dest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dest.is_empty()
    }

    /// Destination index of entry `i`.
    pub fn dest(&self) -> &[usize] {
        &self.dest
    }

    /// Source index feeding entry `j` (inverse permutation).
    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.src.iter().map(|&i| g[i]).collect()
    }

    pub fn apply_inverse(&self, g: &[f64]) -> Vec<f64> {
        self.dest.iter().map(|&j| g[j]).collect()
    }
}

/// One streaming step of `g`.
pub fn stream(g: &[f64], model: &VelocityModel, geom: &LatticeGeometry) -> Result<Vec<f64>> {
    check_len("stream", geom.num_sites() * model.q(), g.len())?;
    Ok(StreamingMap::new(model, geom)?.apply(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn d2_ordering() {
        let m = VelocityModel::new(2).unwrap();
        let v: Vec<_> = (0..9).map(|i| m.velocity(i).to_vec()).collect();
        assert_eq!(
            v,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![-1, 0],
                vec![0, 1],
                vec![0, -1],
                vec![1, 1],
                vec![1, -1],
                vec![-1, 1],
                vec![-1, -1]
            ]
        );
        assert_eq!(m.opposite(5), 8);
        assert_eq!(m.weights_exact()[0], Rational64::new(4, 9));
        assert_eq!(m.weights_exact()[8], Rational64::new(1, 36));
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(matches!(VelocityModel::new(4), Err(Error::UnsupportedDimension(4))));
    }

    #[test]
    fn d1_equilibrium_example() {
        let m = VelocityModel::new(1).unwrap();
        let g = equilibrium(&[0.0], &[0.1], &m).unwrap();
        assert_abs_diff_eq!(g[0], -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.055, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], -0.045, epsilon = 1e-15);
    }

    #[test]
    fn d1_collide_example() {
        let m = VelocityModel::new(1).unwrap();
        let g = collide(&[0.1, 0.05, -0.05], &m, 1.0).unwrap();
        assert_abs_diff_eq!(g[0], 0.17 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.215 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], -0.085 / 3.0, epsilon = 1e-15);
        assert!(collide(&[0.0; 3], &m, 0.5).is_err());
    }

    #[test]
    fn wall_bounce() {
        let m = VelocityModel::new(1).unwrap();
        let mut geom = LatticeGeometry::periodic(&[4]).unwrap();
        geom.set_wall(2, true);
        let mut g = vec![0.0; 12];
        g[3 + 1] = 1.0;
        let s = stream(&g, &m, &geom).unwrap();
        assert_eq!(s[3 + 2], 1.0);
        assert_eq!(s.iter().sum::<f64>(), 1.0);
    }
}
