//! Momentum-exchange drag on walls and the boundary states whose overlap
//! with the normalised final state encodes it.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::{norm2, LatticeGeometry, VelocityModel};
use crate::simulation::SimParams;

/// A fluid-to-wall link: fluid site `site`, velocity `m` pointing into a wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallLink {
    pub site: usize,
    pub m: usize,
}

/// All links with `W(r + e_m) (1 - W(r)) = 1`.
pub fn wall_links(model: &VelocityModel, geom: &LatticeGeometry) -> Result<Vec<WallLink>> {
    check_len("geometry dimension", model.dim(), geom.dim())?;
    let mut links = Vec::new();
    for site in 0..geom.num_sites() {
        if geom.is_wall(site) {
            continue;
        }
        for m in 1..model.q() {
            if geom.is_wall(geom.neighbor(site, model.velocity(m))) {
                links.push(WallLink { site, m });
            }
        }
    }
    Ok(links)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragResult {
    /// Zero-velocity equilibrium contribution `sum 2 w_m e_m`.
    #[serde(rename = "F0_star")]
    pub f0_star: Vec<f64>,
    /// Total force in lattice units.
    #[serde(rename = "F_star")]
    pub f_star: Vec<f64>,
    /// `F_k = sum (g_m + g_{-m}) (e_m)_k`.
    pub components: Vec<f64>,
    pub units: String,
    /// `reference mass * dx^2 / dt`, present when physical anchors are known.
    pub physical_factor: Option<f64>,
    pub num_links: usize,
}

/// Momentum-exchange drag of the state `g` on every wall in `geom`.
pub fn drag_force(g: &[f64], model: &VelocityModel, geom: &LatticeGeometry) -> Result<DragResult> {
    let q = model.q();
    check_len("drag state", geom.num_sites() * q, g.len())?;
    let dim = model.dim();
    let links = wall_links(model, geom)?;
    let mut f0 = vec![0.0; dim];
    let mut comps = vec![0.0; dim];
    let w = model.weights();
    for l in &links {
        let e = model.velocity(l.m);
        let pair = g[l.site * q + l.m] + g[l.site * q + model.opposite(l.m)];
        for k in 0..dim {
            f0[k] += 2.0 * w[l.m] * e[k] as f64;
            comps[k] += pair * e[k] as f64;
        }
    }
    let f_star = f0.iter().zip(&comps).map(|(a, b)| a + b).collect();
    Ok(DragResult {
        f0_star: f0,
        f_star,
        components: comps,
        units: "lattice".into(),
        physical_factor: None,
        num_links: links.len(),
    })
}

impl DragResult {
    /// Attaches the physical conversion `mass * dx^2 / dt` when `sim` carries anchors.
    pub fn with_physical(mut self, sim: &SimParams, reference_mass: f64) -> Self {
        if let (Some(dx), Some(dt)) = (sim.delta_x(), sim.delta_t()) {
            self.physical_factor = Some(reference_mass * dx * dx / dt);
        }
        self
    }

    pub fn physical_force(&self) -> Option<Vec<f64>> {
        self.physical_factor.map(|c| self.f_star.iter().map(|f| f * c).collect())
    }
}

/// Unnormalised boundary state for force component `k`: amplitude
/// `(e_m)_k` added at both `(r, m)` and `(r, -m)` for every wall link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub k: usize,
    pub amplitudes: Vec<f64>,
    /// Squared norm of `amplitudes`.
    pub normalization: f64,
    pub support: usize,
}

pub fn boundary_state(model: &VelocityModel, geom: &LatticeGeometry, k: usize) -> Result<BoundaryState> {
    if k >= model.dim() {
        return Err(Error::InvalidParameter(format!("component {k} outside dimension {}", model.dim())));
    }
    let q = model.q();
    let mut amp = vec![0.0; geom.num_sites() * q];
    for l in wall_links(model, geom)? {
        let ek = model.velocity(l.m)[k] as f64;
        if ek == 0.0 {
            continue;
        }
        amp[l.site * q + l.m] += ek;
        amp[l.site * q + model.opposite(l.m)] += ek;
    }
    let normalization: f64 = amp.iter().map(|a| a * a).sum();
    if normalization == 0.0 {
        return Err(Error::InvalidParameter(format!("boundary state for component {k} has empty support")));
    }
    let support = amp.iter().filter(|a| **a != 0.0).count();
    Ok(BoundaryState { k, amplitudes: amp, normalization, support })
}

impl BoundaryState {
    /// `<W_k | g / ||g||>` with the normalised boundary state.
    pub fn overlap(&self, g: &[f64]) -> Result<f64> {
        check_len("overlap state", self.amplitudes.len(), g.len())?;
        let ng = norm2(g);
        if ng == 0.0 {
            return Err(Error::InvalidParameter("overlap with the zero state".into()));
        }
        let dot: f64 = self.amplitudes.iter().zip(g).map(|(a, b)| a * b).sum();
        Ok(dot / (ng * self.normalization.sqrt()))
    }

    /// `F_k` recovered from the overlap: `<W_k|psi> ||g|| sqrt(N)`.
    pub fn force_from_overlap(&self, g: &[f64]) -> Result<f64> {
        Ok(self.overlap(g)? * norm2(g) * self.normalization.sqrt())
    }
}

/// Difference between the overlap-reconstructed components and the direct sum.
pub fn overlap_check(g: &[f64], model: &VelocityModel, geom: &LatticeGeometry) -> Result<f64> {
    let drag = drag_force(g, model, geom)?;
    let mut worst: f64 = 0.0;
    for k in 0..model.dim() {
        let Ok(b) = boundary_state(model, geom, k) else {
            worst = worst.max(drag.components[k].abs());
            continue;
        };
        worst = worst.max((b.force_from_overlap(g)? - drag.components[k]).abs());
    }
    Ok(worst)
}
