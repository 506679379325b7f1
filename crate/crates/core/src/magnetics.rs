//! Zeeman coupling of a convected remanent magnetization with a uniform field.
//!
//! The energy of element `e` is `U_e = -(V_e / mu0) B . (F_e B_r,e)`. Because `F`
//! is linear in the nodal positions, the resulting nodal forces do not depend on
//! the deformation: with `a = Dm^-1 B_r`, node `j = 1..3` receives
//! `(V / mu0) a_j B` and node 0 receives the negated sum.

use serde::{Deserialize, Serialize};

use crate::fem::{node, RestData};
use crate::Vec3;

/// Vacuum permeability (T m / A).
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Remanence magnitudes above this (T) are flagged as unusual.
pub const REMANENCE_WARN: f64 = 1.5;
/// Field magnitudes above this (T) are flagged as unusual.
pub const FIELD_WARN: f64 = 2.0;

/// Per-element remanent flux density and the applied uniform field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticParams {
    /// Remanence `B_r` per element in the rest frame (T).
    pub remanence: Vec<Vec3>,
    /// Uniform external flux density `B` (T).
    pub field: Vec3,
}

impl MagneticParams {
    pub fn unmagnetized(element_count: usize) -> Self {
        Self {
            remanence: vec![Vec3::zeros(); element_count],
            field: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.field.iter().all(|c| c.is_finite())
            && self.remanence.iter().all(|b| b.iter().all(|c| c.is_finite()))
    }

    /// Human-readable notes for values outside typical ranges.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(max) = self.remanence.iter().map(|b| b.norm()).max_by(f64::total_cmp) {
            if max > REMANENCE_WARN {
                out.push(format!(
                    "remanence {max:.3} T exceeds {REMANENCE_WARN} T (beyond NdFeB composites)"
                ));
            }
        }
        let b = self.field.norm();
        if b > FIELD_WARN {
            out.push(format!("field magnitude {b:.3} T exceeds {FIELD_WARN} T"));
        }
        out
    }
}

/// Total Zeeman energy (J) at nodal positions `x`.
pub fn zeeman_energy(x: &[f64], rest: &RestData, mag: &MagneticParams) -> f64 {
    rest.elements
        .iter()
        .enumerate()
        .map(|(e, el)| {
            let f = rest.deformation_gradient(e, x);
            -(el.volume / MU0) * mag.field.dot(&(f * mag.remanence[e]))
        })
        .sum()
}

/// Nodal magnetic forces `-dU/dx`, `3N` entries (N).
pub fn magnetic_forces(rest: &RestData, mag: &MagneticParams) -> Vec<f64> {
    let mut out = vec![0.0; rest.dofs()];
    if mag.field == Vec3::zeros() {
        return out;
    }
    for (e, el) in rest.elements.iter().enumerate() {
        let f = element_forces(el.volume, &el.dm_inv, &mag.remanence[e], &mag.field);
        for (a, &n) in el.nodes.iter().enumerate() {
            out[3 * n] += f[a].x;
            out[3 * n + 1] += f[a].y;
            out[3 * n + 2] += f[a].z;
        }
    }
    out
}

/// Forces on the four nodes of one element; they sum to zero exactly.
pub fn element_forces(volume: f64, dm_inv: &crate::Mat3, remanence: &Vec3, field: &Vec3) -> [Vec3; 4] {
    let a = dm_inv * remanence;
    let s = volume / MU0;
    let f1 = field * (s * a.x);
    let f2 = field * (s * a.y);
    let f3 = field * (s * a.z);
    // Built as the exact negation of the running sum so the element total is zero.
    let f0 = -(f1 + f2 + f3);
    [f0, f1, f2, f3]
}

/// Net force and torque about the current volume centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

pub fn net_wrench(x: &[f64], rest: &RestData, mag: &MagneticParams) -> Wrench {
    let mut weighted = Vec3::zeros();
    let mut volume = 0.0;
    for (e, el) in rest.elements.iter().enumerate() {
        let v = rest.current_volume(e, x);
        let c = el.nodes.iter().map(|&n| node(x, n)).sum::<Vec3>() * 0.25;
        weighted += c * v;
        volume += v;
    }
    let centroid = if volume != 0.0 { weighted / volume } else { Vec3::zeros() };
    let forces = magnetic_forces(rest, mag);
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for n in 0..rest.node_count {
        let f = node(&forces, n);
        force += f;
        torque += (node(x, n) - centroid).cross(&f);
    }
    Wrench { force, torque }
}
