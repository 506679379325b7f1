//! Corotational linear-elastic tetrahedral finite elements.
//!
//! Each element keeps its rest shape, volume and 12x12 linear stiffness `K_e`.
//! At run time the element rotation `R` is extracted from the deformation
//! gradient by polar decomposition and the element force is
//! `f_e = -R K_e (R^T x_e - X_e)`.

use nalgebra::SMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh_io::TetMesh;
use crate::sparse::BlockCsr;
use crate::{Mat3, Vec3};

pub type Mat12 = SMatrix<f64, 12, 12>;

/// Smallest admissible rest volume (m^3).
pub const MIN_ELEMENT_VOLUME: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("invalid material parameter {field}: {reason}")]
    InvalidMaterial { field: &'static str, reason: String },
    #[error("degenerate element {tet}: rest volume {volume:e} m^3")]
    DegenerateElement { tet: usize, volume: f64 },
    #[error("inverted element: det(F) = {det:e}")]
    InvertedElement { det: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Elastic and inertial material constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Pa
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m^3
    pub density: f64,
    /// Rayleigh mass coefficient, 1/s
    pub rayleigh_mass: f64,
    /// Rayleigh stiffness coefficient, s
    pub rayleigh_stiffness: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            young_modulus: 1e6,
            poisson_ratio: 0.45,
            density: 1200.0,
            rayleigh_mass: 0.1,
            rayleigh_stiffness: 0.1,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), FemError> {
        let bad = |field, reason: &str| {
            Err(FemError::InvalidMaterial {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.young_modulus.is_finite() && self.young_modulus > 0.0) {
            return bad("young_modulus", "must be finite and > 0");
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return bad("poisson_ratio", "must lie in the open interval (-1, 0.5)");
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return bad("density", "must be finite and > 0");
        }
        if !(self.rayleigh_mass.is_finite() && self.rayleigh_mass >= 0.0) {
            return bad("rayleigh_mass", "must be finite and >= 0");
        }
        if !(self.rayleigh_stiffness.is_finite() && self.rayleigh_stiffness >= 0.0) {
            return bad("rayleigh_stiffness", "must be finite and >= 0");
        }
        Ok(())
    }
}

/// Lamé constants `(lambda, mu)` in Pa.
pub fn lame_parameters(material: &MaterialParams) -> Result<(f64, f64), FemError> {
    material.validate()?;
    let e = material.young_modulus;
    let nu = material.poisson_ratio;
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((lambda, mu))
}

/// Rest-state quantities of one tetrahedron.
#[derive(Debug, Clone)]
pub struct ElementRest {
    pub nodes: [usize; 4],
    pub rest: [Vec3; 4],
    /// Inverse of `Dm = [X1 - X0, X2 - X0, X3 - X0]`.
    pub dm_inv: Mat3,
    pub volume: f64,
    /// Gradients of the four linear shape functions.
    pub grads: [Vec3; 4],
    pub stiffness: Mat12,
    /// `stiffness` as 4x4 node blocks, row-major.
    pub blocks: [Mat3; 16],
}

/// Rest data for the whole mesh.
#[derive(Debug, Clone)]
pub struct RestData {
    pub elements: Vec<ElementRest>,
    pub node_count: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl RestData {
    pub fn dofs(&self) -> usize {
        3 * self.node_count
    }

    pub fn total_volume(&self) -> f64 {
        self.elements.iter().map(|e| e.volume).sum()
    }

    pub fn tets(&self) -> Vec<[usize; 4]> {
        self.elements.iter().map(|e| e.nodes).collect()
    }

    /// Mean area of the element faces in the rest configuration (m^2).
    pub fn mean_face_area(&self) -> f64 {
        const FACES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        if self.elements.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .elements
            .iter()
            .flat_map(|e| {
                FACES.iter().map(move |f| {
                    0.5 * (e.rest[f[1]] - e.rest[f[0]]).cross(&(e.rest[f[2]] - e.rest[f[0]])).norm()
                })
            })
            .sum();
        total / (4 * self.elements.len()) as f64
    }

    /// Deformation gradient of element `e` for nodal positions `x`.
    pub fn deformation_gradient(&self, e: usize, x: &[f64]) -> Mat3 {
        let el = &self.elements[e];
        let p = el.nodes.map(|n| node(x, n));
        Mat3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]) * el.dm_inv
    }

    /// Current (signed) volume of element `e`.
    pub fn current_volume(&self, e: usize, x: &[f64]) -> f64 {
        let el = &self.elements[e];
        let p = el.nodes.map(|n| node(x, n));
        (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0
    }
}

#[inline]
pub(crate) fn node(x: &[f64], n: usize) -> Vec3 {
    Vec3::new(x[3 * n], x[3 * n + 1], x[3 * n + 2])
}

/// Positions, velocities and clock of a running simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub time: f64,
    pub step: u64,
}

impl SimState {
    pub fn at_rest(mesh: &TetMesh) -> Self {
        let positions: Vec<f64> = mesh.nodes.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        let velocities = vec![0.0; positions.len()];
        Self {
            positions,
            velocities,
            time: 0.0,
            step: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.positions.len() / 3
    }

    pub fn position(&self, n: usize) -> Vec3 {
        node(&self.positions, n)
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|v| v.is_finite())
    }
}

/// Linear isotropic stiffness of a 4-node tet: `K_e = V B^T C B`.
pub fn element_stiffness(grads: &[Vec3; 4], volume: f64, lambda: f64, mu: f64) -> Mat12 {
    let mut b = SMatrix::<f64, 6, 12>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g.x;
        b[(1, c + 1)] = g.y;
        b[(2, c + 2)] = g.z;
        // Engineering shear strains: xy, yz, zx.
        b[(3, c)] = g.y;
        b[(3, c + 1)] = g.x;
        b[(4, c + 1)] = g.z;
        b[(4, c + 2)] = g.y;
        b[(5, c)] = g.z;
        b[(5, c + 2)] = g.x;
    }
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = lambda;
        }
        d[(i, i)] = lambda + 2.0 * mu;
        d[(i + 3, i + 3)] = mu;
    }
    let k = b.transpose() * d * b * volume;
    // Symmetrise away round-off.
    (k + k.transpose()) * 0.5
}

pub fn precompute_rest(mesh: &TetMesh, material: &MaterialParams) -> Result<RestData, FemError> {
    let (lambda, mu) = lame_parameters(material)?;
    let elements = mesh
        .tets
        .iter()
        .enumerate()
        .map(|(t, &tet)| {
            let rest = tet.map(|i| mesh.nodes[i]);
            let dm = Mat3::from_columns(&[rest[1] - rest[0], rest[2] - rest[0], rest[3] - rest[0]]);
            let volume = dm.determinant() / 6.0;
            if !(volume > MIN_ELEMENT_VOLUME) {
                return Err(FemError::DegenerateElement { tet: t, volume });
            }
            let dm_inv = dm.try_inverse().ok_or(FemError::DegenerateElement { tet: t, volume })?;
            let g1: Vec3 = dm_inv.row(0).transpose();
            let g2: Vec3 = dm_inv.row(1).transpose();
            let g3: Vec3 = dm_inv.row(2).transpose();
            let grads = [-(g1 + g2 + g3), g1, g2, g3];
            let stiffness = element_stiffness(&grads, volume, lambda, mu);
            let mut blocks = [Mat3::zeros(); 16];
            for a in 0..4 {
                for b in 0..4 {
                    blocks[4 * a + b] = stiffness.fixed_view::<3, 3>(3 * a, 3 * b).into_owned();
                }
            }
            Ok(ElementRest {
                nodes: tet,
                rest,
                dm_inv,
                volume,
                grads,
                stiffness,
                blocks,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RestData {
        elements,
        node_count: mesh.nodes.len(),
        lambda,
        mu,
    })
}

/// Rotation factor of the polar decomposition `F = R S`.
///
/// Computed from the SVD `F = U Σ V^T` as `R = U V^T`, negating the singular
/// direction with the smallest singular value if that product is a reflection.
pub fn polar_rotation(f: &Mat3) -> Result<Mat3, FemError> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(FemError::InvertedElement { det });
    }
    Ok(rotation_from_svd(f))
}

fn rotation_from_svd(f: &Mat3) -> Mat3 {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        let mut col = u.column_mut(smallest);
        col *= -1.0;
        r = u * v_t;
    }
    r
}

/// Result of an elastic force evaluation.
#[derive(Debug, Clone)]
pub struct ElasticForces {
    /// Nodal forces, `3N` (N).
    pub forces: Vec<f64>,
    /// Element rotations used, to be reused by the tangent and stress recovery.
    pub rotations: Vec<Mat3>,
    /// Elements with `det F <= 0`; their previous rotation was kept.
    pub inverted: Vec<usize>,
}

/// Corotational elastic forces.
///
/// `previous` supplies the fallback rotation for inverted elements; identity is
/// used when absent.
pub fn elastic_forces(
    positions: &[f64],
    rest: &RestData,
    previous: Option<&[Mat3]>,
) -> Result<ElasticForces, FemError> {
    if positions.len() != rest.dofs() {
        return Err(FemError::DimensionMismatch {
            expected: rest.dofs(),
            found: positions.len(),
        });
    }
    let per_element: Vec<(Mat3, bool, [Vec3; 4])> = rest
        .elements
        .par_iter()
        .enumerate()
        .map(|(e, el)| {
            let f = rest.deformation_gradient(e, positions);
            let (r, inverted) = match polar_rotation(&f) {
                Ok(r) => (r, false),
                Err(_) => (previous.map_or_else(Mat3::identity, |p| p[e]), true),
            };
            let rt = r.transpose();
            let mut u = [Vec3::zeros(); 4];
            for a in 0..4 {
                u[a] = rt * node(positions, el.nodes[a]) - el.rest[a];
            }
            let mut forces = [Vec3::zeros(); 4];
            for a in 0..4 {
                let mut acc = Vec3::zeros();
                for b in 0..4 {
                    acc += el.blocks[4 * a + b] * u[b];
                }
                forces[a] = -(r * acc);
            }
            (r, inverted, forces)
        })
        .collect();

    let mut forces = vec![0.0; rest.dofs()];
    let mut rotations = Vec::with_capacity(per_element.len());
    let mut inverted = Vec::new();
    // Sequential scatter keeps the summation order fixed.
    for (e, (r, inv, f)) in per_element.into_iter().enumerate() {
        for (a, &n) in rest.elements[e].nodes.iter().enumerate() {
            forces[3 * n] += f[a].x;
            forces[3 * n + 1] += f[a].y;
            forces[3 * n + 2] += f[a].z;
        }
        rotations.push(r);
        if inv {
            inverted.push(e);
        }
    }
    Ok(ElasticForces {
        forces,
        rotations,
        inverted,
    })
}

/// Corotational energy `1/2 sum u_e^T K_e u_e` with `u_e = R^T x_e - X_e` for
/// the given (frozen) rotations.
pub fn corotational_energy(positions: &[f64], rest: &RestData, rotations: &[Mat3]) -> f64 {
    rest.elements
        .iter()
        .zip(rotations)
        .map(|(el, r)| {
            let rt = r.transpose();
            let mut u = SMatrix::<f64, 12, 1>::zeros();
            for a in 0..4 {
                let ua = rt * node(positions, el.nodes[a]) - el.rest[a];
                u.fixed_view_mut::<3, 1>(3 * a, 0).copy_from(&ua);
            }
            0.5 * (u.transpose() * el.stiffness * u)[(0, 0)]
        })
        .sum()
}

/// Rotated element blocks `R K_ab R^T`.
pub fn rotated_blocks(el: &ElementRest, r: &Mat3) -> [Mat3; 16] {
    let rt = r.transpose();
    let mut out = [Mat3::zeros(); 16];
    for (o, k) in out.iter_mut().zip(&el.blocks) {
        *o = r * k * rt;
    }
    out
}

/// Consistent element tangent `-d f_e / d x_e` as 4x4 node blocks, including
/// the variation of the polar rotation.
///
/// With `S = R^T F` the first Piola stress is
/// `P = 2 mu (F - R) + lambda tr(S - I) R`. The rotation variation is
/// `dR = R [w]x` with `(tr(S) I - S) w = axial(R^T dF - dF^T R)`.
pub fn consistent_blocks(el: &ElementRest, f: &Mat3, r: &Mat3, lambda: f64, mu: f64) -> [Mat3; 16] {
    let rt = r.transpose();
    let s = rt * f;
    let s = (s + s.transpose()) * 0.5;
    let trace_strain = s.trace() - 3.0;
    let g = Mat3::identity() * s.trace() - s;
    let g_inv = g.try_inverse();
    let mut out = [Mat3::zeros(); 16];
    for b in 0..4 {
        for j in 0..3 {
            let mut df = Mat3::zeros();
            df.set_row(j, &el.grads[b].transpose());
            let m = rt * df;
            let mut dp = df * (2.0 * mu) + r * (lambda * m.trace());
            if let Some(g_inv) = g_inv {
                let axial = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
                let w = g_inv * axial;
                let dr = r * w.cross_matrix();
                dp += dr * (lambda * trace_strain - 2.0 * mu);
            }
            for a in 0..4 {
                let col = dp * el.grads[a] * el.volume;
                out[4 * a + b].set_column(j, &col);
            }
        }
    }
    out
}

/// Assembles the consistent tangent of the corotational forces at `positions`.
/// Inverted elements (no valid polar rotation) use `R K_e R^T`.
pub fn assemble_consistent_tangent(positions: &[f64], rest: &RestData, rotations: &[Mat3], matrix: &mut BlockCsr) {
    let element_blocks: Vec<[Mat3; 16]> = rest
        .elements
        .par_iter()
        .enumerate()
        .zip(rotations.par_iter())
        .map(|((e, el), r)| {
            let f = rest.deformation_gradient(e, positions);
            if f.determinant() > 0.0 {
                consistent_blocks(el, &f, r, rest.lambda, rest.mu)
            } else {
                rotated_blocks(el, r)
            }
        })
        .collect();
    matrix.clear();
    for (e, blocks) in element_blocks.iter().enumerate() {
        matrix.add_tet(e, blocks);
    }
}

/// Matrix-free `K(x) v` with `K = sum R K_e R^T`.
pub fn tangent_apply(rest: &RestData, rotations: &[Mat3], v: &[f64]) -> Result<Vec<f64>, FemError> {
    if v.len() != rest.dofs() {
        return Err(FemError::DimensionMismatch {
            expected: rest.dofs(),
            found: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    for (el, r) in rest.elements.iter().zip(rotations) {
        let rt = r.transpose();
        let local = el.nodes.map(|n| rt * node(v, n));
        for a in 0..4 {
            let mut acc = Vec3::zeros();
            for b in 0..4 {
                acc += el.blocks[4 * a + b] * local[b];
            }
            let ra = r * acc;
            let n = el.nodes[a];
            out[3 * n] += ra.x;
            out[3 * n + 1] += ra.y;
            out[3 * n + 2] += ra.z;
        }
    }
    Ok(out)
}

/// Assembles `K = sum R K_e R^T` into `matrix` (cleared first).
pub fn assemble_tangent(rest: &RestData, rotations: &[Mat3], matrix: &mut BlockCsr) {
    let element_blocks: Vec<[Mat3; 16]> = rest
        .elements
        .par_iter()
        .zip(rotations.par_iter())
        .map(|(el, r)| rotated_blocks(el, r))
        .collect();
    matrix.clear();
    for (e, blocks) in element_blocks.iter().enumerate() {
        matrix.add_tet(e, blocks);
    }
}

/// Lumped nodal masses, `3N` entries (kg): each tet gives `rho V / 4` to each node.
pub fn lumped_mass(mesh: &TetMesh, material: &MaterialParams) -> Vec<f64> {
    let mut mass = vec![0.0; 3 * mesh.nodes.len()];
    for t in 0..mesh.tets.len() {
        let share = material.density * mesh.tet_volume(t) / 4.0;
        for &n in &mesh.tets[t] {
            for k in 0..3 {
                mass[3 * n + k] += share;
            }
        }
    }
    mass
}
